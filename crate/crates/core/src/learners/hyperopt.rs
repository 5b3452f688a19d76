//! Grid search: train each candidate, score it on a held-out test part and
//! keep the minimizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, split, split_two, Dataset, Encoder, SplitPlan};
use crate::error::{Error, Result};
use crate::rng::tags;

use super::{
    count_parameters, cross_entropy_loss, train_learner, BoostConfig, ClassifierModel, ForestConfig, LearnerConfig,
    NetworkConfig, Target,
};

/// Test losses closer than this count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub dropouts: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            depths: vec![0, 1, 2, 3],
            widths: vec![8, 16, 24],
            dropouts: (0..=8).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl HyperGrid {
    pub fn singleton(depth: usize, width: usize, dropout: f64) -> Self {
        HyperGrid {
            depths: vec![depth],
            widths: vec![width],
            dropouts: vec![dropout],
        }
    }

    /// Every combination, depth-major, on top of `base`'s training settings.
    pub fn candidates(&self, base: &NetworkConfig) -> Vec<NetworkConfig> {
        let mut out = Vec::new();
        for &depth in &self.depths {
            for &width in &self.widths {
                for &dropout in &self.dropouts {
                    out.push(NetworkConfig {
                        depth,
                        width,
                        dropout,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.depths.len() * self.widths.len() * self.dropouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGrid {
    pub max_depths: Vec<usize>,
    pub min_leaves: Vec<usize>,
    /// Max features per split (forest) or learning rates (boosted); the
    /// unused list is ignored.
    pub max_features: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl TreeGrid {
    pub fn forest_default() -> Self {
        TreeGrid {
            max_depths: vec![3, 5, 7],
            min_leaves: vec![10, 20, 50],
            max_features: vec![3, 5, 10],
            learning_rates: Vec::new(),
        }
    }

    pub fn boosted_default() -> Self {
        TreeGrid {
            max_depths: vec![2, 3, 4],
            min_leaves: vec![10, 20, 50],
            max_features: Vec::new(),
            learning_rates: vec![0.01, 0.05, 0.1],
        }
    }

    pub fn forest_candidates(&self, base: &ForestConfig) -> Vec<LearnerConfig> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depths {
            for &min_leaf in &self.min_leaves {
                for &max_features in &self.max_features {
                    out.push(LearnerConfig::Forest(ForestConfig {
                        max_depth,
                        min_leaf,
                        max_features,
                        ..base.clone()
                    }));
                }
            }
        }
        out
    }

    pub fn boosted_candidates(&self, base: &BoostConfig) -> Vec<LearnerConfig> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depths {
            for &min_leaf in &self.min_leaves {
                for &learning_rate in &self.learning_rates {
                    out.push(LearnerConfig::Boosted(BoostConfig {
                        max_depth,
                        min_leaf,
                        learning_rate,
                        ..base.clone()
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub config: LearnerConfig,
    /// Trainable scalars for networks, total tree nodes for ensembles.
    pub parameters: usize,
    pub test_loss: f64,
    /// Best validation loss (networks) or mean cross-validated loss (trees).
    pub validation_loss: Option<f64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperoptReport {
    pub candidates: Vec<CandidateResult>,
    pub selected: usize,
}

impl HyperoptReport {
    pub fn best(&self) -> &CandidateResult {
        &self.candidates[self.selected]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "candidate",
            "kind",
            "config",
            "parameters",
            "validation_loss",
            "test_loss",
            "epochs",
            "selected",
        ])?;
        for (i, c) in self.candidates.iter().enumerate() {
            w.write_record([
                i.to_string(),
                c.config.kind().to_string(),
                describe(&c.config),
                c.parameters.to_string(),
                c.validation_loss.map_or(String::new(), |v| v.to_string()),
                c.test_loss.to_string(),
                c.epochs.map_or(String::new(), |v| v.to_string()),
                (i == self.selected).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<hyperopt report>", e))?;
        Ok(())
    }
}

/// Short human-readable label for a configuration.
pub fn describe(cfg: &LearnerConfig) -> String {
    match cfg {
        LearnerConfig::Network(c) => format!("D={} W={} d={}", c.depth, c.width, c.dropout),
        LearnerConfig::Forest(c) => format!("depth={} leaf={} features={}", c.max_depth, c.min_leaf, c.max_features),
        LearnerConfig::Boosted(c) => format!("depth={} leaf={} rate={}", c.max_depth, c.min_leaf, c.learning_rate),
    }
}

fn dropout_of(cfg: &LearnerConfig) -> f64 {
    match cfg {
        LearnerConfig::Network(c) => c.dropout,
        _ => 0.0,
    }
}

/// Index of the smallest test loss; ties go to fewer parameters, then lower
/// dropout, then the earlier candidate.
pub fn select(candidates: &[CandidateResult]) -> usize {
    let min = candidates.iter().map(|c| c.test_loss).fold(f64::INFINITY, f64::min);
    (0..candidates.len())
        .filter(|&i| candidates[i].test_loss <= min + TIE_TOLERANCE)
        .min_by(|&a, &b| {
            let (ca, cb) = (&candidates[a], &candidates[b]);
            ca.parameters
                .cmp(&cb.parameters)
                .then(dropout_of(&ca.config).total_cmp(&dropout_of(&cb.config)))
                .then(a.cmp(&b))
        })
        .expect("nonempty candidate list")
}

fn model_size(m: &ClassifierModel) -> usize {
    match &m.predictor {
        super::Predictor::Network(n) => n.params().len(),
        super::Predictor::Forest(f) => f.trees.iter().map(|t| t.nodes.len()).sum(),
        super::Predictor::Boosted(b) => b.rounds.iter().flatten().map(|t| t.nodes.len()).sum(),
        super::Predictor::Constant { probs } => probs.len(),
    }
}

/// The selected model together with the full report.
#[derive(Debug, Clone)]
pub struct HyperoptOutcome {
    pub report: HyperoptReport,
    pub model: ClassifierModel,
}

/// Trains every grid candidate on the training part of `plan`, stops early
/// on the validation part and scores on the test part.
pub fn hyperopt_network(
    d: &Dataset,
    grid: &HyperGrid,
    plan: &SplitPlan,
    base: &NetworkConfig,
) -> Result<HyperoptOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let (train, validation, test) = split(d, plan)?;
    let encoder = Encoder::new(d.schema());
    let width = encoder.width();
    let runs: Vec<Result<(CandidateResult, ClassifierModel)>> = grid
        .candidates(base)
        .into_par_iter()
        .map(|c| {
            let cfg = LearnerConfig::Network(c.clone());
            let model = train_learner(&cfg, &train, Some(&validation), &encoder, Target::Joint)?;
            let report = model.report.as_ref().expect("networks report training");
            let result = CandidateResult {
                parameters: count_parameters(&c, width, 4),
                test_loss: cross_entropy_loss(&model, &test)?,
                validation_loss: Some(report.best_validation_loss),
                epochs: Some(report.epochs.len()),
                config: cfg,
            };
            Ok((result, model))
        })
        .collect();
    finish(runs)
}

fn finish(runs: Vec<Result<(CandidateResult, ClassifierModel)>>) -> Result<HyperoptOutcome> {
    let mut candidates = Vec::with_capacity(runs.len());
    let mut models = Vec::with_capacity(runs.len());
    for r in runs {
        let (c, m) = r?;
        candidates.push(c);
        models.push(m);
    }
    let selected = select(&candidates);
    Ok(HyperoptOutcome {
        model: models.swap_remove(selected),
        report: HyperoptReport { candidates, selected },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSearch {
    /// Training share of the train/test split.
    pub train_fraction: f64,
    /// Folds for cross-validated losses on the training side; `None` skips it.
    pub cv_folds: Option<usize>,
    pub seed: u64,
}

impl Default for TreeSearch {
    fn default() -> Self {
        TreeSearch {
            train_fraction: 0.8,
            cv_folds: Some(5),
            seed: 0,
        }
    }
}

/// Grid search over tree-ensemble configurations with a train/test split.
/// Each candidate is also cross-validated on the training side when
/// requested; selection uses the test loss.
pub fn hyperopt_trees(d: &Dataset, candidates: &[LearnerConfig], search: &TreeSearch) -> Result<HyperoptOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    if candidates.iter().any(|c| matches!(c, LearnerConfig::Network(_))) {
        return Err(Error::Config(
            "tree search takes forest or boosted configurations".into(),
        ));
    }
    let (a, b) = split_two(d.len(), search.train_fraction, search.seed, tags::SPLIT)?;
    let (train, test) = (d.subset(&a)?, d.subset(&b)?);
    let encoder = Encoder::new(d.schema());
    let folds = match search.cv_folds {
        Some(k) => Some(make_folds(&train, k, search.seed)?),
        None => None,
    };
    let runs: Vec<Result<(CandidateResult, ClassifierModel)>> = candidates
        .par_iter()
        .map(|cfg| {
            let cv = match &folds {
                Some(f) => {
                    let mut total = 0.0;
                    for k in 0..f.k {
                        let m = train_learner(cfg, &train.subset(&f.complement(k))?, None, &encoder, Target::Joint)?;
                        total += cross_entropy_loss(&m, &train.subset(&f.members(k))?)?;
                    }
                    Some(total / f.k as f64)
                }
                None => None,
            };
            let model = train_learner(cfg, &train, None, &encoder, Target::Joint)?;
            let result = CandidateResult {
                config: cfg.clone(),
                parameters: model_size(&model),
                test_loss: cross_entropy_loss(&model, &test)?,
                validation_loss: cv,
                epochs: None,
            };
            Ok((result, model))
        })
        .collect();
    finish(runs)
}
