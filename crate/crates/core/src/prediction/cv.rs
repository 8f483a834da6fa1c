//! Repeated class-balanced cross-validation and grid search.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enet::fit_elastic_net;
use super::forest::{fit_random_forest, ForestParams};
use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Keeps every minority-class row and an equally sized random sample of the
/// majority class, drawn without replacement. Returned indices are sorted.
pub fn balanced_subsample<R: Rng + ?Sized>(labels: &[u8], rng: &mut R) -> Result<Vec<usize>> {
    let ones: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let zeros: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    match (zeros.len(), ones.len()) {
        (0, 0) => return Err(Error::EmptyInput("no labelled rows".into())),
        (0, _) => return Err(Error::SingleClass(1)),
        (_, 0) => return Err(Error::SingleClass(0)),
        _ => {}
    }
    let (minority, majority) = if ones.len() <= zeros.len() {
        (ones, zeros)
    } else {
        (zeros, ones)
    };
    let mut out = minority.clone();
    out.extend(
        index::sample(rng, majority.len(), minority.len())
            .into_iter()
            .map(|i| majority[i]),
    );
    out.sort_unstable();
    Ok(out)
}

/// Stratified assignment of `rows` to `k` folds of near-equal size.
/// Returns one list of row indices per fold.
pub fn stratified_folds<R: Rng + ?Sized>(
    rows: &[usize],
    labels: &[u8],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..=1u8 {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} rows, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for m in members {
            folds[next].push(m);
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ElasticNet,
    RandomForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub model: ModelKind,
    pub lambda: f64,
    pub alpha: f64,
    pub folds: usize,
    /// Every session must be held out at least this many times.
    pub min_visits: usize,
    pub seed: u64,
    pub forest: ForestParams,
    /// Record the train/test split of every fold.
    pub audit: bool,
    pub max_repeats: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            model: ModelKind::ElasticNet,
            lambda: 0.0518,
            alpha: 0.802,
            folds: 5,
            min_visits: 50,
            seed: 0,
            forest: ForestParams::default(),
            audit: false,
            max_repeats: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldLog {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    pub options: CvOptions,
    pub n_repeats: usize,
    pub n_fits: usize,
    /// Held-out accuracy on class 0 and class 1.
    pub class_accuracy: [f64; 2],
    /// Unweighted mean of the two class accuracies.
    pub overall_accuracy: f64,
    pub feature_names: Vec<String>,
    /// Fraction of fits in which each feature was used.
    pub selection_frequency: Vec<f64>,
    pub visit_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_log: Vec<FoldLog>,
}

struct RepeatOutcome {
    /// (row, predicted class) for every held-out prediction.
    predictions: Vec<(usize, u8)>,
    selected: Vec<usize>,
    fits: usize,
    log: Vec<FoldLog>,
}

fn run_repeat(x: &FeatureMatrix, opts: &CvOptions, repeat: usize) -> Result<RepeatOutcome> {
    let mut rng = seed::rng(opts.seed, &[repeat as u64]);
    let rows = balanced_subsample(&x.labels, &mut rng)?;
    let folds = stratified_folds(&rows, &x.labels, opts.folds, &mut rng)?;
    let mut out = RepeatOutcome {
        predictions: Vec::with_capacity(rows.len()),
        selected: vec![0; x.n_features()],
        fits: 0,
        log: Vec::new(),
    };
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let train_x = x.subset(&train);
        match opts.model {
            ModelKind::ElasticNet => {
                let fit = fit_elastic_net(&train_x, opts.lambda, opts.alpha)?;
                for (s, nz) in out.selected.iter_mut().zip(fit.nonzero()) {
                    *s += usize::from(nz);
                }
                for &i in test {
                    out.predictions.push((i, fit.predict(&x.rows[i])?.1));
                }
            }
            ModelKind::RandomForest => {
                let forest_seed = seed::derive(opts.seed, &[repeat as u64, f as u64, 1]);
                let forest = fit_random_forest(&train_x, &opts.forest, forest_seed)?;
                for (s, used) in out.selected.iter_mut().zip(&forest.used_features) {
                    *s += usize::from(*used);
                }
                for &i in test {
                    out.predictions.push((i, forest.predict(&x.rows[i])?));
                }
            }
        }
        out.fits += 1;
        if opts.audit {
            out.log.push(FoldLog {
                repeat,
                fold: f,
                train,
                test: test.clone(),
            });
        }
    }
    Ok(out)
}

/// Repeats balanced subsampling and stratified k-fold CV until every session
/// has been held out `min_visits` times. Repeats run in parallel batches and
/// are folded in order, so results do not depend on thread count.
pub fn repeated_cv(x: &FeatureMatrix, opts: &CvOptions) -> Result<CvReport> {
    x.require_both_classes()?;
    if opts.min_visits == 0 {
        return Err(Error::InvalidArgument("min_visits must be positive".into()));
    }
    let n = x.len();
    let mut visits = vec![0usize; n];
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    let mut selected = vec![0usize; x.n_features()];
    let mut fits = 0;
    let mut log = Vec::new();
    let mut repeats = 0;
    let batch = (rayon::current_num_threads() * 2).max(4);
    'outer: while repeats < opts.max_repeats {
        let end = (repeats + batch).min(opts.max_repeats);
        let outcomes: Vec<Result<RepeatOutcome>> = (repeats..end)
            .into_par_iter()
            .map(|r| {
                run_repeat(x, opts, r).map_err(|e| Error::Repeat {
                    repeat: r,
                    source: Box::new(e),
                })
            })
            .collect();
        for outcome in outcomes {
            let outcome = outcome?;
            repeats += 1;
            for (i, pred) in outcome.predictions {
                let y = x.labels[i] as usize;
                visits[i] += 1;
                total[y] += 1;
                correct[y] += usize::from(pred as usize == y);
            }
            for (s, c) in selected.iter_mut().zip(&outcome.selected) {
                *s += c;
            }
            fits += outcome.fits;
            log.extend(outcome.log);
            if visits.iter().all(|&v| v >= opts.min_visits) {
                break 'outer;
            }
        }
    }
    if visits.iter().any(|&v| v < opts.min_visits) {
        return Err(Error::Degenerate(format!(
            "visit target not reached after {repeats} repeats"
        )));
    }
    let class_accuracy = [
        correct[0] as f64 / total[0] as f64,
        correct[1] as f64 / total[1] as f64,
    ];
    Ok(CvReport {
        model_name: None,
        measure: None,
        features: None,
        options: *opts,
        n_repeats: repeats,
        n_fits: fits,
        class_accuracy,
        overall_accuracy: 0.5 * (class_accuracy[0] + class_accuracy[1]),
        feature_names: x.feature_names.clone(),
        selection_frequency: selected.iter().map(|&s| s as f64 / fits as f64).collect(),
        visit_counts: x.session_ids.iter().cloned().zip(visits).collect(),
        fold_log: log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub alpha: f64,
    pub class_accuracy: [f64; 2],
    pub overall_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_lambda: f64,
    pub best_alpha: f64,
    pub best: CvReport,
    /// One point per (λ, α) pair, λ-major in input order.
    pub surface: Vec<GridPoint>,
}

/// Elastic-net CV over a (λ, α) grid. Every grid point uses the same seed
/// schedule. Ties in overall accuracy go to the larger λ, then larger α.
pub fn grid_search(
    x: &FeatureMatrix,
    lambdas: &[f64],
    alphas: &[f64],
    base: &CvOptions,
) -> Result<GridResult> {
    if lambdas.is_empty() || alphas.is_empty() {
        return Err(Error::EmptyInput("empty lambda or alpha grid".into()));
    }
    let mut surface = Vec::with_capacity(lambdas.len() * alphas.len());
    let mut best: Option<CvReport> = None;
    for &lambda in lambdas {
        for &alpha in alphas {
            let opts = CvOptions {
                model: ModelKind::ElasticNet,
                lambda,
                alpha,
                ..*base
            };
            let report = repeated_cv(x, &opts)?;
            surface.push(GridPoint {
                lambda,
                alpha,
                class_accuracy: report.class_accuracy,
                overall_accuracy: report.overall_accuracy,
            });
            let better = match &best {
                None => true,
                Some(b) => {
                    let key = |r: &CvReport| (r.overall_accuracy, r.options.lambda, r.options.alpha);
                    key(&report).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Greater)
                }
            };
            if better {
                best = Some(report);
            }
        }
    }
    let best = best.expect("non-empty grid");
    Ok(GridResult {
        best_lambda: best.options.lambda,
        best_alpha: best.options.alpha,
        best,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(n0: usize, n1: usize) -> Vec<u8> {
        let mut v = vec![0u8; n0];
        v.extend(std::iter::repeat_n(1u8, n1));
        v
    }

    #[test]
    fn subsample_keeps_minority_and_balances() {
        let y = labels(70, 36);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = balanced_subsample(&y, &mut rng).unwrap();
        assert_eq!(rows.len(), 72);
        assert!((70..106).all(|i| rows.contains(&i)));
        assert_eq!(rows.iter().filter(|&&i| i < 70).count(), 36);
        let mut dedup = rows.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 72);
    }

    #[test]
    fn subsample_of_balanced_data_is_identity() {
        let y = labels(20, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(balanced_subsample(&y, &mut rng).unwrap(), (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn subsample_single_class_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            balanced_subsample(&labels(5, 0), &mut rng),
            Err(Error::SingleClass(0))
        ));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let y = labels(36, 36);
        let rows: Vec<usize> = (0..72).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let folds = stratified_folds(&rows, &y, 5, &mut rng).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, rows);
        for f in &folds {
            assert!(f.len() == 14 || f.len() == 15);
            let ones = f.iter().filter(|&&i| y[i] == 1).count();
            assert!(ones == 7 || ones == 8);
        }
    }
}
