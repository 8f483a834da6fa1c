//! Elastic-net penalized binomial logistic regression.
//!
//! Minimizes `(1/N)·Σ deviance_n + λ·((1−α)/2·‖β‖² + α·‖β‖₁)` over
//! standardized features with an unpenalized intercept. Outer loop: IRLS
//! quadratic approximation; inner loop: cyclic coordinate descent with
//! soft-thresholding.

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Standardization};
use crate::error::{Error, Result};

/// Solver limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Outer convergence: max absolute coefficient change.
    pub tolerance: f64,
    pub max_outer: usize,
    pub inner_tolerance: f64,
    pub max_inner: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-7,
            max_outer: 10_000,
            inner_tolerance: 1e-13,
            max_inner: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetFit {
    pub feature_names: Vec<String>,
    /// Coefficients on the standardized scale.
    pub beta: Vec<f64>,
    pub beta0: f64,
    /// Coefficients on the original feature scale.
    pub beta_original: Vec<f64>,
    pub beta0_original: f64,
    pub standardization: Standardization,
    pub lambda: f64,
    pub alpha: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn linear(z: &[f64], beta0: f64, beta: &[f64]) -> f64 {
    beta0 + z.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

/// `(1/N)·Σ 2·(log(1 + e^η) − y·η)`.
pub fn mean_deviance(z: &[Vec<f64>], y: &[u8], beta0: f64, beta: &[f64]) -> f64 {
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta = linear(row, beta0, beta);
            2.0 * (softplus(eta) - yi as f64 * eta)
        })
        .sum();
    total / z.len() as f64
}

/// Gradient of [`mean_deviance`]: (∂/∂β₀, ∂/∂β).
pub fn mean_deviance_gradient(
    z: &[Vec<f64>],
    y: &[u8],
    beta0: f64,
    beta: &[f64],
) -> (f64, Vec<f64>) {
    let n = z.len() as f64;
    let mut g0 = 0.0;
    let mut g = vec![0.0; beta.len()];
    for (row, &yi) in z.iter().zip(y) {
        let r = logistic(linear(row, beta0, beta)) - yi as f64;
        g0 += r;
        for (gj, zj) in g.iter_mut().zip(row) {
            *gj += r * zj;
        }
    }
    g0 *= 2.0 / n;
    g.iter_mut().for_each(|v| *v *= 2.0 / n);
    (g0, g)
}

pub fn penalized_objective(
    z: &[Vec<f64>],
    y: &[u8],
    beta0: f64,
    beta: &[f64],
    lambda: f64,
    alpha: f64,
) -> f64 {
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    mean_deviance(z, y, beta0, beta) + lambda * ((1.0 - alpha) / 2.0 * l2 + alpha * l1)
}

/// Smallest λ at which every coefficient is zero (α > 0).
pub fn lambda_max(x: &FeatureMatrix, alpha: f64) -> f64 {
    let std = Standardization::fit(&x.rows, x.n_features());
    let z: Vec<Vec<f64>> = x.rows.iter().map(|r| std.apply(r)).collect();
    let ybar = x.labels.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
    let n = x.len() as f64;
    let max_grad = (0..x.n_features())
        .map(|j| {
            z.iter()
                .zip(&x.labels)
                .map(|(r, &y)| (y as f64 - ybar) * r[j])
                .sum::<f64>()
                .abs()
                * 2.0
                / n
        })
        .fold(0.0, f64::max);
    max_grad / alpha.max(f64::MIN_POSITIVE)
}

fn validate(x: &FeatureMatrix, lambda: f64, alpha: f64) -> Result<()> {
    x.require_both_classes()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

pub fn fit_elastic_net(x: &FeatureMatrix, lambda: f64, alpha: f64) -> Result<ElasticNetFit> {
    fit_elastic_net_with(x, lambda, alpha, &FitOptions::default())
}

pub fn fit_elastic_net_with(
    x: &FeatureMatrix,
    lambda: f64,
    alpha: f64,
    opts: &FitOptions,
) -> Result<ElasticNetFit> {
    validate(x, lambda, alpha)?;
    let k = x.n_features();
    let n = x.len();
    let nf = n as f64;
    let std = Standardization::fit(&x.rows, k);
    let z: Vec<Vec<f64>> = x.rows.iter().map(|r| std.apply(r)).collect();
    let y: Vec<f64> = x.labels.iter().map(|&v| v as f64).collect();
    // Column-major copy for the coordinate sweeps.
    let cols: Vec<Vec<f64>> = (0..k).map(|j| z.iter().map(|r| r[j]).collect()).collect();

    let ybar = y.iter().sum::<f64>() / nf;
    let mut beta0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; k];
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let objective = |b0: f64, b: &[f64]| penalized_objective(&z, &x.labels, b0, b, lambda, alpha);

    let mut converged = false;
    let mut iterations = 0;
    let mut current = objective(beta0, &beta);
    let mut eta = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < opts.max_outer {
        iterations += 1;
        for i in 0..n {
            eta[i] = linear(&z[i], beta0, &beta);
            let p = logistic(eta[i]);
            w[i] = (p * (1.0 - p)).max(1e-8);
            // Working response minus the current linear predictor.
            resid[i] = (y[i] - p) / w[i];
        }
        let mut new0 = beta0;
        let mut new = beta.clone();
        let wsum: f64 = w.iter().sum();
        let col_w: Vec<f64> = cols
            .iter()
            .map(|c| 2.0 / nf * c.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>())
            .collect();
        for _ in 0..opts.max_inner {
            let mut delta = 0.0f64;
            let shift = resid.iter().zip(&w).map(|(r, wi)| r * wi).sum::<f64>() / wsum;
            if shift != 0.0 {
                new0 += shift;
                resid.iter_mut().for_each(|r| *r -= shift);
                delta = delta.max(shift.abs());
            }
            for j in 0..k {
                let denom = col_w[j] + l2;
                let old = new[j];
                let next = if denom > 0.0 && col_w[j] > 0.0 {
                    let rho = 2.0 / nf
                        * cols[j]
                            .iter()
                            .zip(&resid)
                            .zip(&w)
                            .map(|((c, r), wi)| wi * c * r)
                            .sum::<f64>()
                        + col_w[j] * old;
                    soft_threshold(rho, l1) / denom
                } else {
                    0.0
                };
                if next != old {
                    let d = next - old;
                    for (r, c) in resid.iter_mut().zip(&cols[j]) {
                        *r -= d * c;
                    }
                    new[j] = next;
                    delta = delta.max(d.abs());
                }
            }
            if delta < opts.inner_tolerance {
                break;
            }
        }

        // Step-halving keeps the outer iteration monotone on hard problems.
        let mut step = 1.0;
        let mut cand0 = new0;
        let mut cand = new.clone();
        let mut value = objective(cand0, &cand);
        while value > current + 1e-15 * current.abs().max(1.0) && step > 1e-6 {
            step *= 0.5;
            cand0 = beta0 + step * (new0 - beta0);
            cand = beta
                .iter()
                .zip(&new)
                .map(|(o, c)| o + step * (c - o))
                .collect();
            value = objective(cand0, &cand);
        }
        let change = beta
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold((beta0 - cand0).abs(), f64::max);
        beta0 = cand0;
        beta = cand;
        current = value.min(current);
        if !beta0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            break;
        }
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "elastic net (lambda={lambda}, alpha={alpha}) did not converge in {iterations} iterations"
        );
    }

    let beta_original: Vec<f64> = beta.iter().zip(&std.scale).map(|(b, s)| b / s).collect();
    let beta0_original = beta0
        - beta_original
            .iter()
            .zip(&std.mean)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(ElasticNetFit {
        feature_names: x.feature_names.clone(),
        beta,
        beta0,
        beta_original,
        beta0_original,
        standardization: std,
        lambda,
        alpha,
        converged,
        n_iterations: iterations,
    })
}

impl ElasticNetFit {
    pub fn linear_predictor(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.beta.len() {
            return Err(Error::LengthMismatch {
                expected: self.beta.len(),
                got: z.len(),
            });
        }
        Ok(linear(&self.standardization.apply(z), self.beta0, &self.beta))
    }

    /// (P(class 1), predicted class); class 1 iff the probability is ≥ 0.5.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, u8)> {
        let p = logistic(self.linear_predictor(z)?);
        Ok((p, u8::from(p >= 0.5)))
    }

    pub fn nonzero(&self) -> impl Iterator<Item = bool> + '_ {
        self.beta.iter().map(|b| *b != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
        let k = rows[0].len();
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            (0..k).map(|j| format!("f{j}")).collect(),
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn logistic_closed_forms() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3.0f64.ln()) - 0.75).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }

    #[test]
    fn huge_lambda_gives_the_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let x = matrix(rows, labels);
        let lam = lambda_max(&x, 0.5) * 1.01;
        let fit = fit_elastic_net(&x, lam, 0.5).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!((fit.beta0 - (10.0f64 / 20.0).ln()).abs() < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn null_model_on_balanced_data_predicts_one_half() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let x = matrix(rows, labels);
        let fit = fit_elastic_net(&x, 1e6, 1.0).unwrap();
        for z in [[0.0, 0.0], [100.0, -3.0], [5.0, 7.0]] {
            let (p, class) = fit.predict(&z).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
            assert_eq!(class, 1);
        }
        assert!(fit.predict(&[1.0]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = matrix(vec![vec![1.0], vec![2.0]], vec![1, 1]);
        assert!(matches!(fit_elastic_net(&x, 0.1, 0.5), Err(Error::SingleClass(1))));
        let x = matrix(vec![vec![1.0], vec![2.0]], vec![0, 1]);
        assert!(fit_elastic_net(&x, -0.1, 0.5).is_err());
        assert!(fit_elastic_net(&x, 0.1, 1.5).is_err());
        assert!(FeatureMatrix::new(
            vec!["a".into()],
            vec!["f".into()],
            vec![vec![f64::NAN]],
            vec![0]
        )
        .is_err());
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
    }
}
