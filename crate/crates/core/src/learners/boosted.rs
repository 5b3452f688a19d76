//! Multiclass gradient boosting: one regression tree per class and round,
//! fit to the negative gradient of the softmax cross-entropy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

use super::tree::{BinaryMatrix, GrowParams, RegressionGrower, Tree};
use super::PROB_FLOOR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_rounds: 500,
            max_depth: 4,
            min_leaf: 20,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config(
                "boosting: rounds, depth and min leaf must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "boosting: learning rate must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub initial: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[m][k]` is the tree of class `k` in round `m`.
    pub rounds: Vec<Vec<Tree>>,
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

impl Boosted {
    pub fn scores(&self, active: &[usize]) -> Vec<f64> {
        let mut f = self.initial.clone();
        for round in &self.rounds {
            for (fk, t) in f.iter_mut().zip(round) {
                *fk += self.learning_rate * t.leaf(active)[0];
            }
        }
        f
    }

    pub fn predict(&self, active: &[usize]) -> Vec<f64> {
        softmax(&self.scores(active))
    }

    /// Squared-error reduction per design column, summed over all trees.
    pub fn column_gains(&self, width: usize) -> Vec<f64> {
        let mut acc = vec![0.0; width];
        for round in &self.rounds {
            for t in round {
                t.add_gains(&mut acc);
            }
        }
        acc
    }
}

pub fn train_boosted(
    cfg: &BoostConfig,
    x: &BinaryMatrix,
    classes: &[usize],
    n_classes: usize,
    weights: &[f64],
) -> Result<Boosted> {
    cfg.validate()?;
    let n = classes.len();
    if n == 0 {
        return Err(Error::Invalid("boosting: no training records".into()));
    }
    let mut prior = vec![0.0; n_classes];
    for (&y, &w) in classes.iter().zip(weights) {
        prior[y] += w;
    }
    let total: f64 = prior.iter().sum();
    let initial: Vec<f64> = prior.iter().map(|m| (m / total).max(PROB_FLOOR).ln()).collect();
    let mut scores: Vec<Vec<f64>> = vec![initial.clone(); n];
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf as f64,
        max_features: None,
    };
    let leaf_scale = (n_classes as f64 - 1.0) / n_classes as f64;
    let actives: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..x.width).filter(|&j| x.get(i, j)).collect())
        .collect();
    let mut rounds = Vec::with_capacity(cfg.n_rounds);
    for m in 0..cfg.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let trees: Vec<Tree> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let g: Vec<f64> = (0..n)
                    .map(|i| f64::from(u8::from(classes[i] == k)) - probs[i][k])
                    .collect();
                let h: Vec<f64> = g.iter().map(|v| v.abs() * (1.0 - v.abs())).collect();
                let grower = RegressionGrower {
                    x,
                    residuals: &g,
                    hessians: &h,
                    weights,
                    leaf_scale,
                    params,
                };
                let stream = (m * n_classes + k) as u64;
                grower.grow((0..n).collect(), &mut rng::stream(cfg.seed, tags::FEATURES, stream))
            })
            .collect();
        for (s, active) in scores.iter_mut().zip(&actives) {
            for (sk, t) in s.iter_mut().zip(&trees) {
                *sk += cfg.learning_rate * t.leaf(active)[0];
            }
        }
        rounds.push(trees);
    }
    Ok(Boosted {
        initial,
        learning_rate: cfg.learning_rate,
        rounds,
    })
}
