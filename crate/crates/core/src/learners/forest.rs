//! Random forest of weighted-entropy classification trees.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

use super::tree::{BinaryMatrix, ClassificationGrower, GrowParams, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Design columns drawn at each split.
    pub max_features: usize,
    /// Resample records with probability proportional to their weight. When
    /// off, every tree sees all records with their weights.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            max_depth: 5,
            min_leaf: 10,
            max_features: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 || self.max_features == 0 {
            return Err(Error::Config(
                "forest: trees, depth, min leaf and max features must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub classes: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, active: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.leaf(active)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Entropy decrease per design column, summed over trees.
    pub fn column_gains(&self, width: usize) -> Vec<f64> {
        let mut acc = vec![0.0; width];
        for t in &self.trees {
            t.add_gains(&mut acc);
        }
        acc
    }
}

pub fn train_forest(
    cfg: &ForestConfig,
    x: &BinaryMatrix,
    classes: &[usize],
    n_classes: usize,
    weights: &[f64],
) -> Result<Forest> {
    cfg.validate()?;
    let n = classes.len();
    if n == 0 {
        return Err(Error::Invalid("forest: no training records".into()));
    }
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf as f64,
        max_features: Some(cfg.max_features),
    };
    let unit = vec![1.0; n];
    let sampler = WeightedIndex::new(weights).map_err(|e| Error::Invalid(format!("forest weights: {e}")))?;
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let grower = ClassificationGrower {
                x,
                classes,
                n_classes,
                counts: &unit,
                weights: if cfg.bootstrap { &unit } else { weights },
                params,
            };
            let rows: Vec<usize> = if cfg.bootstrap {
                let mut r = rng::stream(cfg.seed, tags::BOOTSTRAP, t as u64);
                let mut rows: Vec<usize> = (0..n).map(|_| sampler.sample(&mut r)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n).collect()
            };
            grower.grow(rows, &mut rng::stream(cfg.seed, tags::FEATURES, t as u64))
        })
        .collect();
    Ok(Forest {
        classes: n_classes,
        trees,
    })
}
