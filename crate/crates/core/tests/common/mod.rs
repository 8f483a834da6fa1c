//! Helpers shared by the integration tests.
#![allow(dead_code)]

use dyadsync::prediction::{logistic, ElasticNetFit, FeatureMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
    let k = rows[0].len();
    FeatureMatrix::new(
        (0..rows.len()).map(|i| format!("s{i:03}")).collect(),
        (0..k).map(|j| format!("f{j}")).collect(),
        rows,
        labels,
    )
    .unwrap()
}

/// Rows with a logistic dependence on the first `informative` columns.
pub fn simulated(n: usize, k: usize, informative: usize, strength: f64, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 1.0).collect();
        let eta: f64 = row[..informative].iter().map(|v| strength * (v - 1.0)).sum();
        labels.push(u8::from(rng.gen::<f64>() < logistic(eta)));
        rows.push(row);
    }
    matrix(rows, labels)
}

pub fn standardized(x: &FeatureMatrix, fit: &ElasticNetFit) -> Vec<Vec<f64>> {
    x.rows.iter().map(|r| fit.standardization.apply(r)).collect()
}

/// Plain Newton–Raphson on raw features with an intercept column.
pub fn newton_logistic(x: &FeatureMatrix) -> Vec<f64> {
    let p = x.n_features() + 1;
    let design: Vec<Vec<f64>> = x
        .rows
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let mut b = vec![0.0; p];
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for (row, &y) in design.iter().zip(&x.labels) {
            let eta: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
            let mu = logistic(eta);
            for a in 0..p {
                grad[a] += (y as f64 - mu) * row[a];
                for c in 0..p {
                    hess[a][c] += mu * (1.0 - mu) * row[a] * row[c];
                }
            }
        }
        let step = solve(hess, grad);
        let size = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        b.iter_mut().zip(&step).for_each(|(v, s)| *v += s);
        if size < 1e-13 {
            break;
        }
    }
    b
}

pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}
