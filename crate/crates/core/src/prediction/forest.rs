//! Bagged classification trees with random feature subsets.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌈√K⌉.
    pub max_features: Option<usize>,
    /// Minimum number of samples in each child.
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 20,
            max_features: None,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, z: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
    /// Features used by at least one split.
    pub used_features: Vec<bool>,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

fn majority(counts: [usize; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

struct Grower<'a, R: Rng> {
    x: &'a FeatureMatrix,
    params: ForestParams,
    mtry: usize,
    rng: R,
    nodes: Vec<Node>,
    used: Vec<bool>,
}

impl<R: Rng> Grower<'_, R> {
    fn counts(&self, samples: &[usize]) -> [usize; 2] {
        let ones = samples.iter().filter(|&&i| self.x.labels[i] == 1).count();
        [samples.len() - ones, ones]
    }

    /// Best (weighted child impurity, threshold) for one feature.
    fn best_split(&self, samples: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut order: Vec<(f64, u8)> = samples
            .iter()
            .map(|&i| (self.x.rows[i][feature], self.x.labels[i]))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = self.counts(samples);
        let n = order.len();
        let mut left = [0usize; 2];
        let mut best: Option<(f64, f64)> = None;
        for cut in 1..n {
            left[order[cut - 1].1 as usize] += 1;
            if order[cut - 1].0 == order[cut].0 {
                continue;
            }
            if cut < self.params.min_leaf || n - cut < self.params.min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = (cut as f64 * gini(left) + (n - cut) as f64 * gini(right)) / n as f64;
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, 0.5 * (order[cut - 1].0 + order[cut].0)));
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&samples);
        self.nodes.push(Node::Leaf(majority(counts)));
        if counts[0] == 0 || counts[1] == 0 || samples.len() < 2 * self.params.min_leaf {
            return id;
        }
        let parent = gini(counts);
        let mut features: Vec<usize> = (0..self.x.n_features()).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        // Keep drawing past the subset size until some feature can split.
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((score, thr)) = self.best_split(&samples, f) {
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, thr));
                }
            }
        }
        let Some((score, feature, threshold)) = best else {
            return id;
        };
        if score >= parent {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x.rows[i][feature] <= threshold);
        self.used[feature] = true;
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub fn fit_random_forest(x: &FeatureMatrix, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    x.require_both_classes()?;
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InvalidArgument(
            "forest needs at least one tree and a positive leaf size".into(),
        ));
    }
    let k = x.n_features();
    let mtry = params
        .max_features
        .unwrap_or_else(|| (k as f64).sqrt().ceil() as usize)
        .clamp(1, k.max(1));
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut used = vec![false; k];
    for t in 0..params.n_trees {
        let mut rng = seed::rng(seed, &[t as u64]);
        let samples: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
        let mut grower = Grower {
            x,
            params: *params,
            mtry,
            rng,
            nodes: Vec::new(),
            used: vec![false; k],
        };
        grower.grow(samples);
        for (u, g) in used.iter_mut().zip(&grower.used) {
            *u |= *g;
        }
        trees.push(Tree {
            nodes: grower.nodes,
        });
    }
    Ok(RandomForest {
        trees,
        n_features: k,
        used_features: used,
    })
}

impl RandomForest {
    /// Majority vote over trees; ties go to class 0.
    pub fn predict(&self, z: &[f64]) -> Result<u8> {
        if z.len() != self.n_features {
            return Err(Error::LengthMismatch {
                expected: self.n_features,
                got: z.len(),
            });
        }
        let ones = self.trees.iter().filter(|t| t.predict(z) == 1).count();
        Ok(u8::from(2 * ones > self.trees.len()))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
