//! Weighted classifiers for the four `(c, r)` outcomes (or one binary
//! outcome) behind a common model type, plus cross-fitting and importance.

pub mod boosted;
pub mod forest;
pub mod hyperopt;
pub mod network;
pub mod tree;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_two, CategoricalSchema, Dataset, Encoder, FoldAssignment, SplitPlan};
use crate::error::{Error, Result};
use crate::quad::ProbQuad;
use crate::rng::{self, tags};

pub use boosted::{train_boosted, BoostConfig, Boosted};
pub use forest::{train_forest, Forest, ForestConfig};
pub use network::{count_parameters, nominal_parameter_count, Head, Labels, Network, NetworkConfig, TrainingSet};
use tree::BinaryMatrix;

/// Probabilities are clipped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub const MODEL_VERSION: u32 = 1;

/// Share of a training set held out for early stopping when no validation
/// set is given.
pub const INNER_VALIDATION: f64 = 0.15;

/// Dispersion of the Beta part of the weight model.
pub const WEIGHT_DISPERSION: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

impl TrainingReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "validation_loss"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.validation_loss.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<training report>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerConfig {
    Network(NetworkConfig),
    Forest(ForestConfig),
    Boosted(BoostConfig),
}

impl LearnerConfig {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::Network(_) => LearnerKind::Network,
            LearnerConfig::Forest(_) => LearnerKind::Forest,
            LearnerConfig::Boosted(_) => LearnerKind::Boosted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerConfig::Network(c) => c.validate(),
            LearnerConfig::Forest(c) => c.validate(),
            LearnerConfig::Boosted(c) => c.validate(),
        }
    }

    /// Same configuration with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            LearnerConfig::Network(c) => c.seed = seed,
            LearnerConfig::Forest(c) => c.seed = seed,
            LearnerConfig::Boosted(c) => c.seed = seed,
        }
        out
    }

    pub fn seed(&self) -> u64 {
        match self {
            LearnerConfig::Network(c) => c.seed,
            LearnerConfig::Forest(c) => c.seed,
            LearnerConfig::Boosted(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Network,
    Forest,
    Boosted,
    Constant,
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LearnerKind::Network => "network",
            LearnerKind::Forest => "forest",
            LearnerKind::Boosted => "boosted",
            LearnerKind::Constant => "constant",
        })
    }
}

/// Outcome being classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// The four `(c, r)` classes, indexed `2c + r`.
    Joint,
    Coverage,
    Claim,
}

impl Target {
    pub fn classes(&self) -> usize {
        match self {
            Target::Joint => 4,
            _ => 2,
        }
    }

    pub fn label(&self, rec: &crate::data::Record) -> usize {
        match self {
            Target::Joint => rec.class(),
            Target::Coverage => usize::from(rec.c),
            Target::Claim => usize::from(rec.r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predictor {
    Network(Network),
    Forest(Forest),
    Boosted(Boosted),
    /// Same class probabilities for every input.
    Constant {
        probs: Vec<f64>,
    },
}

/// A trained classifier bound to a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: u32,
    pub target: Target,
    pub schema_fingerprint: String,
    pub encoder: Encoder,
    pub config: Option<LearnerConfig>,
    pub predictor: Predictor,
    pub report: Option<TrainingReport>,
}

impl ClassifierModel {
    pub fn kind(&self) -> LearnerKind {
        match self.predictor {
            Predictor::Network(_) => LearnerKind::Network,
            Predictor::Forest(_) => LearnerKind::Forest,
            Predictor::Boosted(_) => LearnerKind::Boosted,
            Predictor::Constant { .. } => LearnerKind::Constant,
        }
    }

    pub fn classes(&self) -> usize {
        self.target.classes()
    }

    /// Model predicting the weighted class frequencies of `d`.
    pub fn constant(d: &Dataset, target: Target) -> Self {
        let mut probs = vec![0.0; target.classes()];
        for r in d.records() {
            probs[target.label(r)] += r.w;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        ClassifierModel {
            version: MODEL_VERSION,
            target,
            schema_fingerprint: d.schema().fingerprint(),
            encoder: Encoder::new(d.schema()),
            config: None,
            predictor: Predictor::Constant { probs },
            report: None,
        }
    }

    /// Class probabilities for a record given by its modality levels.
    pub fn predict(&self, levels: &[usize]) -> Vec<f64> {
        let active = self.encoder.active(levels);
        match &self.predictor {
            Predictor::Network(n) => n.predict(&active),
            Predictor::Forest(f) => f.predict(&active),
            Predictor::Boosted(b) => b.predict(&active),
            Predictor::Constant { probs } => probs.clone(),
        }
    }

    pub fn check_schema(&self, schema: &CategoricalSchema) -> Result<()> {
        if schema.fingerprint() != self.schema_fingerprint {
            return Err(Error::Schema("model was trained on a different schema".into()));
        }
        Ok(())
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.check_schema(d.schema())?;
        Ok(d.records().par_iter().map(|r| self.predict(&r.levels)).collect())
    }

    pub fn predict_quads(&self, d: &Dataset) -> Result<Vec<ProbQuad>> {
        if self.target != Target::Joint {
            return Err(Error::Invalid("quads need a four-class model".into()));
        }
        self.predict_dataset(d)?
            .into_iter()
            .map(|p| ProbQuad::from_array([p[0], p[1], p[2], p[3]]))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a model and verifies it was trained on `schema`.
    pub fn load(path: &Path, schema: &CategoricalSchema) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::from_json(&text)?;
        m.check_schema(schema)?;
        Ok(m)
    }
}

/// Weighted mean negative log-likelihood, `−Σ wᵢ log p_{yᵢ}(xᵢ) / Σ wᵢ`.
pub fn cross_entropy_loss(model: &ClassifierModel, d: &Dataset) -> Result<f64> {
    let probs = model.predict_dataset(d)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (r, p) in d.records().iter().zip(&probs) {
        num -= r.w * p[model.target.label(r)].max(PROB_FLOOR).ln();
        den += r.w;
    }
    Ok(num / den)
}

pub fn training_set(d: &Dataset, encoder: &Encoder, target: Target) -> TrainingSet {
    TrainingSet {
        inputs: d.records().iter().map(|r| encoder.active(&r.levels)).collect(),
        labels: Labels::Classes(d.records().iter().map(|r| target.label(r)).collect()),
        weights: d.weights(),
    }
}

fn binary_matrix(d: &Dataset, encoder: &Encoder) -> BinaryMatrix {
    let rows: Vec<Vec<usize>> = d.records().iter().map(|r| encoder.active(&r.levels)).collect();
    BinaryMatrix::from_active(&rows, encoder.width())
}

/// Trains any learner on `train`. Networks stop early on `validation`, or on
/// an inner hold-out of `train` when none is given; trees ignore it.
pub fn train_learner(
    cfg: &LearnerConfig,
    train: &Dataset,
    validation: Option<&Dataset>,
    encoder: &Encoder,
    target: Target,
) -> Result<ClassifierModel> {
    let (predictor, report) = match cfg {
        LearnerConfig::Network(c) => {
            let (fit_on, stop_on) = match validation {
                Some(v) => (train.clone(), v.clone()),
                None => {
                    let (a, b) = split_two(train.len(), 1.0 - INNER_VALIDATION, c.seed, tags::INNER_SPLIT)?;
                    (train.subset(&a)?, train.subset(&b)?)
                }
            };
            let (net, report) = network::fit(
                c,
                Head::Softmax {
                    classes: target.classes(),
                },
                encoder.width(),
                &training_set(&fit_on, encoder, target),
                &training_set(&stop_on, encoder, target),
            )?;
            (Predictor::Network(net), Some(report))
        }
        LearnerConfig::Forest(c) => {
            let x = binary_matrix(train, encoder);
            let y: Vec<usize> = train.records().iter().map(|r| target.label(r)).collect();
            (
                Predictor::Forest(train_forest(c, &x, &y, target.classes(), &train.weights())?),
                None,
            )
        }
        LearnerConfig::Boosted(c) => {
            let x = binary_matrix(train, encoder);
            let y: Vec<usize> = train.records().iter().map(|r| target.label(r)).collect();
            (
                Predictor::Boosted(train_boosted(c, &x, &y, target.classes(), &train.weights())?),
                None,
            )
        }
    };
    Ok(ClassifierModel {
        version: MODEL_VERSION,
        target,
        schema_fingerprint: train.schema().fingerprint(),
        encoder: encoder.clone(),
        config: Some(cfg.clone()),
        predictor,
        report,
    })
}

/// Four-way network on all features, early-stopped on `validation`.
pub fn train_network(train: &Dataset, validation: &Dataset, cfg: &NetworkConfig) -> Result<ClassifierModel> {
    train_learner(
        &LearnerConfig::Network(cfg.clone()),
        train,
        Some(validation),
        &Encoder::new(train.schema()),
        Target::Joint,
    )
}

/// Two-way network for `c` or `r`.
pub fn train_binary(
    train: &Dataset,
    validation: &Dataset,
    target: Target,
    cfg: &NetworkConfig,
) -> Result<ClassifierModel> {
    if target == Target::Joint {
        return Err(Error::Invalid("binary target must be coverage or claim".into()));
    }
    train_learner(
        &LearnerConfig::Network(cfg.clone()),
        train,
        Some(validation),
        &Encoder::new(train.schema()),
        target,
    )
}

/// Two-part model of the sampling weight: probability of `w = 1` and the
/// mean of a Beta law for `w < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub schema_fingerprint: String,
    pub encoder: Encoder,
    pub network: Network,
    pub report: TrainingReport,
}

impl WeightModel {
    /// `(π̂, m̂)`.
    pub fn components(&self, levels: &[usize]) -> (f64, f64) {
        let out = self.network.predict(&self.encoder.active(levels));
        (out[0], out[1])
    }

    /// `ŵ = π̂ + (1 − π̂) m̂`.
    pub fn predict(&self, levels: &[usize]) -> f64 {
        let (pi, m) = self.components(levels);
        pi + (1.0 - pi) * m
    }

    /// Mean mixture negative log-likelihood (unweighted).
    pub fn loss(&self, d: &Dataset) -> f64 {
        self.network.loss(&weight_set(d, &self.encoder))
    }
}

fn weight_set(d: &Dataset, encoder: &Encoder) -> TrainingSet {
    TrainingSet {
        inputs: d.records().iter().map(|r| encoder.active(&r.levels)).collect(),
        labels: Labels::Values(d.weights()),
        weights: vec![1.0; d.len()],
    }
}

/// Fits the weight model with an inner hold-out for early stopping.
pub fn train_weight_model(d: &Dataset, cfg: &NetworkConfig) -> Result<WeightModel> {
    let encoder = Encoder::new(d.schema());
    let (a, b) = split_two(d.len(), 1.0 - INNER_VALIDATION, cfg.seed, tags::INNER_SPLIT)?;
    let (network, report) = network::fit(
        cfg,
        Head::WeightMixture {
            dispersion: WEIGHT_DISPERSION,
        },
        encoder.width(),
        &weight_set(&d.subset(&a)?, &encoder),
        &weight_set(&d.subset(&b)?, &encoder),
    )?;
    Ok(WeightModel {
        schema_fingerprint: d.schema().fingerprint(),
        encoder,
        network,
        report,
    })
}

/// Predicts every record with a model trained on the other folds.
pub fn cross_fit_predict(d: &Dataset, cfg: &LearnerConfig, folds: &FoldAssignment) -> Result<Vec<ProbQuad>> {
    if folds.fold.len() != d.len() {
        return Err(Error::Invalid("fold assignment does not match the dataset".into()));
    }
    let encoder = Encoder::new(d.schema());
    let per_fold: Vec<Result<(Vec<usize>, Vec<ProbQuad>)>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let members = folds.members(f);
            let rest = folds.complement(f);
            if members.is_empty() || rest.len() < 2 {
                return Err(Error::Invalid(format!("fold {f} is too small to cross-fit")));
            }
            let fold_cfg = cfg.with_seed(rng::derive_seed(cfg.seed(), tags::FOLDS, f as u64));
            let model = train_learner(&fold_cfg, &d.subset(&rest)?, None, &encoder, Target::Joint)?;
            let quads = model.predict_quads(&d.subset(&members)?)?;
            Ok((members, quads))
        })
        .collect();
    let mut out = vec![ProbQuad::uniform(); d.len()];
    for r in per_fold {
        let (members, quads) = r?;
        for (i, q) in members.into_iter().zip(quads) {
            out[i] = q;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    /// Omitted feature, or "None" for the full model.
    pub omitted: String,
    pub test_loss: f64,
    /// Loss without the feature minus the full model's loss.
    pub delta: f64,
}

/// Leave-one-feature-out importance: each feature's dummy block is dropped,
/// the learner retrained on the training part of `plan`, and its test loss
/// compared with the full model's.
pub fn feature_group_importance(d: &Dataset, cfg: &LearnerConfig, plan: &SplitPlan) -> Result<Vec<ImportanceEntry>> {
    let n_features = d.schema().features.len();
    if n_features < 2 {
        return Err(Error::Invalid("importance needs at least two features".into()));
    }
    let (train, validation, test) = crate::data::split(d, plan)?;
    let fit = |included: &[usize]| -> Result<f64> {
        let encoder = Encoder::with_features(d.schema(), included);
        let model = train_learner(cfg, &train, Some(&validation), &encoder, Target::Joint)?;
        cross_entropy_loss(&model, &test)
    };
    let all: Vec<usize> = (0..n_features).collect();
    let mut sets = vec![all.clone()];
    sets.extend((0..n_features).map(|f| all.iter().copied().filter(|&g| g != f).collect::<Vec<_>>()));
    let losses: Vec<Result<f64>> = sets.par_iter().map(|s| fit(s)).collect();
    let losses: Vec<f64> = losses.into_iter().collect::<Result<_>>()?;
    let full = losses[0];
    let mut out = vec![ImportanceEntry {
        omitted: "None".into(),
        test_loss: full,
        delta: 0.0,
    }];
    for (f, loss) in losses.iter().enumerate().skip(1) {
        out.push(ImportanceEntry {
            omitted: d.schema().features[f - 1].name.clone(),
            test_loss: *loss,
            delta: loss - full,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpurityImportance {
    /// Normalized score per design column (column 0, the constant, is 0).
    pub columns: Vec<f64>,
    /// Column scores summed per schema feature, in schema order.
    pub features: Vec<(String, f64)>,
}

/// Split-gain importance of a tree ensemble, normalized to sum to 1.
pub fn impurity_importance(model: &ClassifierModel, schema: &CategoricalSchema) -> Result<ImpurityImportance> {
    model.check_schema(schema)?;
    let width = model.encoder.width();
    let mut columns = match &model.predictor {
        Predictor::Forest(f) => f.column_gains(width),
        Predictor::Boosted(b) => b.column_gains(width),
        _ => {
            return Err(Error::Invalid(format!(
                "impurity importance needs a tree ensemble, not a {} model",
                model.kind()
            )))
        }
    };
    let total: f64 = columns.iter().sum();
    if total > 0.0 {
        columns.iter_mut().for_each(|c| *c /= total);
    }
    let mut features: Vec<(String, f64)> = schema.features.iter().map(|f| (f.name.clone(), 0.0)).collect();
    for (j, v) in columns.iter().enumerate() {
        if let Some(f) = model.encoder.column_feature(j) {
            features[f].1 += v;
        }
    }
    Ok(ImpurityImportance { columns, features })
}
