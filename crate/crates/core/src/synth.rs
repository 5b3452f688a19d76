//! Synthetic data with known conditional probabilities.
//!
//! The generator parameterizes each covariate cell by its coverage
//! probability `p = logistic(a·x)`, claim probability `q = logistic(b·x)`
//! and conditional correlation `ρ*(x)`, and derives the four-way quad from
//! them. The correlation of the generated `(c, r)` given `x` is therefore
//! exactly `ρ*(x)`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalSchema, Dataset, Encoder, Record};
use crate::error::{Error, Result};
use crate::quad::ProbQuad;
use crate::rng::{self, tags};

pub const DGP_VERSION: u32 = 1;
const BLOCK: usize = 4096;
const EAGER_CELL_LIMIT: f64 = 1e6;
const FEASIBILITY_TOL: f64 = 1e-12;

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Conditional correlation as a function of the covariate cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoMap {
    Constant {
        value: f64,
    },
    /// One value per modality of the named feature.
    ByFeature {
        feature: String,
        values: Vec<f64>,
    },
    /// `tanh(coefs · x)` over the dummy row.
    Tanh {
        coefs: Vec<f64>,
    },
}

/// Mass `mass_at_one` at `w = 1`, otherwise `Beta(beta_a, beta_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLaw {
    pub mass_at_one: f64,
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for WeightLaw {
    fn default() -> Self {
        WeightLaw {
            mass_at_one: 0.4,
            beta_a: 2.0,
            beta_b: 2.0,
        }
    }
}

impl WeightLaw {
    /// Every record observed for the full year.
    pub fn unit() -> Self {
        WeightLaw {
            mass_at_one: 1.0,
            ..Self::default()
        }
    }

    /// Expected weight.
    pub fn mean(&self) -> f64 {
        self.mass_at_one + (1.0 - self.mass_at_one) * self.beta_a / (self.beta_a + self.beta_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgp {
    #[serde(default = "dgp_version")]
    pub version: u32,
    pub schema: CategoricalSchema,
    /// Independent categorical marginals, one probability vector per feature.
    pub marginals: Vec<Vec<f64>>,
    /// Coverage logit coefficients, one per dummy column.
    pub coef_p: Vec<f64>,
    /// Claim logit coefficients, one per dummy column.
    pub coef_q: Vec<f64>,
    pub rho: RhoMap,
    #[serde(default)]
    pub weights: WeightLaw,
    /// Redraw budget per record for schemas too large to validate eagerly.
    #[serde(default = "default_rejection_cap")]
    pub rejection_cap: usize,
}

fn dgp_version() -> u32 {
    DGP_VERSION
}

fn default_rejection_cap() -> usize {
    1000
}

/// True quantities for one covariate cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub quad: ProbQuad,
    pub cov: f64,
    pub rho: f64,
}

/// Ground truth for every cell that occurs in a sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub cells: BTreeMap<Vec<usize>, CellTruth>,
}

impl GroundTruth {
    pub fn get(&self, levels: &[usize]) -> Option<&CellTruth> {
        self.cells.get(levels)
    }

    /// Truth for each record of `d`, in record order.
    pub fn per_record(&self, d: &Dataset) -> Result<Vec<CellTruth>> {
        d.records()
            .iter()
            .map(|r| {
                self.get(&r.levels)
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("no ground truth for cell {:?}", r.levels)))
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, schema: &CategoricalSchema, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
        header.extend(["p00", "p01", "p10", "p11", "cov", "rho"].map(String::from));
        wtr.write_record(&header)?;
        for (levels, t) in &self.cells {
            let mut row: Vec<String> = levels
                .iter()
                .zip(&schema.features)
                .map(|(&l, f)| f.modalities[l].to_string())
                .collect();
            row.extend(t.quad.to_array().iter().map(|v| v.to_string()));
            row.push(t.cov.to_string());
            row.push(t.rho.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Quad with marginals `p`, `q` and correlation `rho`; `None` when the
/// implied `p11` violates the Fréchet bounds.
pub fn quad_from_marginals(p: f64, q: f64, rho: f64) -> Option<ProbQuad> {
    let cov = rho * (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    let p11 = p * q + cov;
    let p10 = p - p11;
    let p01 = q - p11;
    let p00 = 1.0 - p - q + p11;
    let raw = [p00, p01, p10, p11];
    if raw
        .iter()
        .any(|v| !v.is_finite() || *v < -FEASIBILITY_TOL || *v > 1.0 + FEASIBILITY_TOL)
    {
        return None;
    }
    let [p00, p01, p10, p11] = raw.map(|v| v.clamp(0.0, 1.0));
    Some(ProbQuad { p00, p01, p10, p11 })
}

/// Feasible correlation range `[lo, hi]` for the given marginals.
pub fn rho_bounds(p: f64, q: f64) -> (f64, f64) {
    let s = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let lo = ((p + q - 1.0).max(0.0) - p * q) / s;
    let hi = (p.min(q) - p * q) / s;
    (lo, hi)
}

/// Design coefficients with `intercept` on the constant and, for each
/// feature, effects rising linearly from 0 at the reference modality to
/// `slopes[f]` at the last one.
pub fn graded_coefficients(schema: &CategoricalSchema, intercept: f64, slopes: &[f64]) -> Vec<f64> {
    let mut out = vec![intercept];
    for (f, s) in schema.features.iter().zip(slopes) {
        let k = f.modalities.len();
        out.extend((1..k).map(|l| s * l as f64 / (k - 1) as f64));
    }
    out
}

impl SyntheticDgp {
    /// Default schema with coverage near 0.37 and claims near 0.07 on
    /// average, both driven by all eight features, and a correlation that
    /// falls linearly with car age from 0.10 to −0.04.
    pub fn insurance_default() -> Self {
        let schema = CategoricalSchema::default_insurance();
        let sp = [-0.8, 0.4, 0.3, 0.2, 0.2, 0.1, -0.2, 0.1];
        let sq = [-0.4, 0.25, -0.3, 0.1, 0.25, 0.15, 0.2, -0.1];
        let logit = |v: f64| (v / (1.0 - v)).ln();
        let coef_p = graded_coefficients(&schema, logit(0.37) - 0.5 * sp.iter().sum::<f64>(), &sp);
        let coef_q = graded_coefficients(&schema, logit(0.07) - 0.5 * sq.iter().sum::<f64>(), &sq);
        let values = (0..12).map(|l| 0.10 - 0.14 * l as f64 / 11.0).collect();
        SyntheticDgp::new(
            schema,
            coef_p,
            coef_q,
            RhoMap::ByFeature {
                feature: "car_age".into(),
                values,
            },
        )
        .expect("built-in design is feasible")
    }

    /// Uniform covariate marginals, default weight law.
    pub fn new(schema: CategoricalSchema, coef_p: Vec<f64>, coef_q: Vec<f64>, rho: RhoMap) -> Result<Self> {
        let marginals = schema
            .features
            .iter()
            .map(|f| vec![1.0 / f.modalities.len() as f64; f.modalities.len()])
            .collect();
        let dgp = SyntheticDgp {
            version: DGP_VERSION,
            schema,
            marginals,
            coef_p,
            coef_q,
            rho,
            weights: WeightLaw::default(),
            rejection_cap: default_rejection_cap(),
        };
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn with_weights(mut self, weights: WeightLaw) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn with_marginals(mut self, marginals: Vec<Vec<f64>>) -> Result<Self> {
        self.marginals = marginals;
        self.validate()?;
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let dgp: SyntheticDgp = toml::from_str(text)?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DGP_VERSION {
            return Err(Error::Config(format!("unsupported DGP version {}", self.version)));
        }
        self.schema.validate()?;
        let width = self.schema.design_width();
        if self.coef_p.len() != width || self.coef_q.len() != width {
            return Err(Error::Config(format!(
                "coefficient vectors need {width} entries (got {} and {})",
                self.coef_p.len(),
                self.coef_q.len()
            )));
        }
        if self.marginals.len() != self.schema.features.len() {
            return Err(Error::Config("one marginal per feature required".into()));
        }
        for (m, f) in self.marginals.iter().zip(&self.schema.features) {
            if m.len() != f.modalities.len()
                || m.iter().any(|p| !(*p >= 0.0))
                || (m.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::Config(format!("bad marginal for feature `{}`", f.name)));
            }
        }
        match &self.rho {
            RhoMap::Constant { value } if !(value.abs() <= 1.0) => {
                return Err(Error::Config(format!("correlation {value} outside [-1, 1]")));
            }
            RhoMap::ByFeature { feature, values } => {
                let f = self.schema.feature_index(feature)?;
                if values.len() != self.schema.features[f].modalities.len() || values.iter().any(|v| !(v.abs() <= 1.0))
                {
                    return Err(Error::Config(format!("bad correlation values for `{feature}`")));
                }
            }
            RhoMap::Tanh { coefs } if coefs.len() != width => {
                return Err(Error::Config(format!("tanh correlation needs {width} coefficients")));
            }
            _ => {}
        }
        let w = &self.weights;
        if !(0.0..=1.0).contains(&w.mass_at_one) || !(w.beta_a > 0.0) || !(w.beta_b > 0.0) {
            return Err(Error::Config("bad weight law".into()));
        }
        if self.schema.cell_count() <= EAGER_CELL_LIMIT {
            self.check_all_cells()?;
        }
        Ok(())
    }

    fn check_all_cells(&self) -> Result<()> {
        let sizes: Vec<usize> = self.schema.features.iter().map(|f| f.modalities.len()).collect();
        let mut levels = vec![0; sizes.len()];
        loop {
            self.true_prob_quad(&levels)?;
            let mut k = 0;
            loop {
                if k == sizes.len() {
                    return Ok(());
                }
                levels[k] += 1;
                if levels[k] < sizes[k] {
                    break;
                }
                levels[k] = 0;
                k += 1;
            }
        }
    }

    /// `(p, q, ρ*)` of a cell.
    pub fn cell_parameters(&self, levels: &[usize]) -> (f64, f64, f64) {
        let enc = Encoder::new(&self.schema);
        let active = enc.active(levels);
        let dot = |coef: &[f64]| active.iter().map(|&j| coef[j]).sum::<f64>();
        let p = logistic(dot(&self.coef_p));
        let q = logistic(dot(&self.coef_q));
        let rho = match &self.rho {
            RhoMap::Constant { value } => *value,
            RhoMap::ByFeature { feature, values } => {
                let f = self.schema.feature_index(feature).expect("validated feature");
                values[levels[f]]
            }
            RhoMap::Tanh { coefs } => dot(coefs).tanh(),
        };
        (p, q, rho)
    }

    pub fn true_prob_quad(&self, levels: &[usize]) -> Result<ProbQuad> {
        let (p, q, rho) = self.cell_parameters(levels);
        quad_from_marginals(p, q, rho).ok_or_else(|| Error::Infeasible {
            cell: self.codes(levels),
            message: format!("p = {p}, q = {q}, rho = {rho} violates the Fréchet bounds"),
        })
    }

    pub fn cell_truth(&self, levels: &[usize]) -> Result<CellTruth> {
        let (_, _, rho) = self.cell_parameters(levels);
        let quad = self.true_prob_quad(levels)?;
        Ok(CellTruth {
            quad,
            cov: quad.p11 - quad.p() * quad.q(),
            rho,
        })
    }

    fn codes(&self, levels: &[usize]) -> Vec<i64> {
        levels
            .iter()
            .zip(&self.schema.features)
            .map(|(&l, f)| f.modalities[l])
            .collect()
    }

    fn draw_levels(&self, rng: &mut rng::Rng) -> Vec<usize> {
        self.marginals
            .iter()
            .map(|m| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (l, p) in m.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return l;
                    }
                }
                m.len() - 1
            })
            .collect()
    }

    fn draw_weight(&self, rng: &mut rng::Rng, beta: &Beta<f64>) -> f64 {
        if rng.random::<f64>() < self.weights.mass_at_one {
            return 1.0;
        }
        loop {
            let w = beta.sample(rng);
            if w > 0.0 && w < 1.0 {
                return w;
            }
        }
    }

    /// Draws `n` i.i.d. records. Blocks of records use independent seed
    /// streams, so the result does not depend on the thread schedule.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<(Dataset, GroundTruth)> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be positive".into()));
        }
        let beta = Beta::new(self.weights.beta_a, self.weights.beta_b)
            .map_err(|e| Error::Config(format!("weight law: {e}")))?;
        let blocks = n.div_ceil(BLOCK);
        let parts: Vec<Result<Vec<(Record, CellTruth)>>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(seed, tags::SAMPLE, b as u64);
                let len = BLOCK.min(n - b * BLOCK);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let mut attempts = 0;
                    let (levels, truth) = loop {
                        let levels = self.draw_levels(&mut rng);
                        match self.cell_truth(&levels) {
                            Ok(t) => break (levels, t),
                            Err(e) => {
                                attempts += 1;
                                if attempts >= self.rejection_cap.max(1) {
                                    return Err(e);
                                }
                            }
                        }
                    };
                    let u: f64 = rng.random();
                    let a = truth.quad.to_array();
                    let mut acc = 0.0;
                    let mut class = 3;
                    for (k, pk) in a.iter().enumerate() {
                        acc += pk;
                        if u < acc {
                            class = k;
                            break;
                        }
                    }
                    let w = self.draw_weight(&mut rng, &beta);
                    out.push((
                        Record {
                            levels,
                            c: class >= 2,
                            r: class % 2 == 1,
                            w,
                        },
                        truth,
                    ));
                }
                Ok(out)
            })
            .collect();
        let mut records = Vec::with_capacity(n);
        let mut truth = GroundTruth::default();
        for part in parts {
            for (rec, t) in part? {
                truth.cells.entry(rec.levels.clone()).or_insert(t);
                records.push(rec);
            }
        }
        let d = Dataset::with_shared_schema(Arc::new(self.schema.clone()), records)?;
        Ok((d, truth))
    }
}
