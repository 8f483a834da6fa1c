//! Trust-class prediction from per-session feature vectors.

mod cv;
mod enet;
mod forest;

pub use cv::{
    balanced_subsample, grid_search, repeated_cv, stratified_folds, CvOptions, CvReport,
    FoldLog, GridPoint, GridResult, ModelKind,
};
pub use enet::{
    fit_elastic_net, lambda_max, logistic, mean_deviance, mean_deviance_gradient,
    penalized_objective, soft_threshold, ElasticNetFit, FitOptions,
};
pub use forest::{fit_random_forest, ForestParams, RandomForest};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled design matrix: one row per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub session_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn new(
        session_ids: Vec<String>,
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if session_ids.len() != rows.len() || labels.len() != rows.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                got: session_ids.len().min(labels.len()),
            });
        }
        for (row, id) in rows.iter().zip(&session_ids) {
            if row.len() != feature_names.len() {
                return Err(Error::LengthMismatch {
                    expected: feature_names.len(),
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    session: id.clone(),
                    feature: feature_names[j].clone(),
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not binary")));
        }
        Ok(FeatureMatrix {
            session_ids,
            feature_names,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// (N₀, N₁).
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            [0, 0] => Err(Error::EmptyInput("feature matrix has no rows".into())),
            [0, _] => Err(Error::SingleClass(1)),
            [_, 0] => Err(Error::SingleClass(0)),
            _ => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            session_ids: indices.iter().map(|&i| self.session_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-feature centring and scaling learned on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant columns get scale 1.
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>], n_features: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; n_features];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scale = vec![0.0; n_features];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in scale.iter_mut() {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardization { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}
