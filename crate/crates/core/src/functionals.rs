//! Covariance and correlation of `(c, r)` from predicted quads, group
//! averages with standard errors, and the debiased group correlation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::quad::ProbQuad;
use crate::rng::{self, tags};
use crate::synth::SyntheticDgp;

/// Marginals within this distance of 0 or 1 are degenerate.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Relative singular-value threshold for dropping debiasing regressors.
pub const COLLINEARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    Covariance,
    Correlation,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::Covariance => "covariance",
            StatisticKind::Correlation => "correlation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    Covariance,
    NaiveCorrelation,
    DebiasedCorrelation,
}

impl std::fmt::Display for EstimateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimateKind::Covariance => "covariance",
            EstimateKind::NaiveCorrelation => "naive-correlation",
            EstimateKind::DebiasedCorrelation => "debiased-correlation",
        })
    }
}

/// `C = p₁₁ − p·q`.
pub fn covariance_from_quad(quad: &ProbQuad) -> f64 {
    quad.p11 - quad.p() * quad.q()
}

fn degenerate(quad: &ProbQuad) -> bool {
    let (p, q) = (quad.p(), quad.q());
    p <= DEGENERATE_TOL || p >= 1.0 - DEGENERATE_TOL || q <= DEGENERATE_TOL || q >= 1.0 - DEGENERATE_TOL
}

/// `ρ = C / √(p(1−p)q(1−q))`.
pub fn correlation_from_quad(quad: &ProbQuad) -> Result<f64> {
    if degenerate(quad) {
        return Err(Error::DegenerateMarginal {
            p: quad.p(),
            q: quad.q(),
        });
    }
    let (p, q) = (quad.p(), quad.q());
    Ok(covariance_from_quad(quad) / (p * (1.0 - p) * q * (1.0 - q)).sqrt())
}

/// `(∇₁, ∇₂) = (ρ(q−½)/(q(1−q)), ρ(p−½)/(p(1−p)))`.
pub fn gradient_regressors(quad: &ProbQuad, rho: f64) -> Result<(f64, f64)> {
    if degenerate(quad) {
        return Err(Error::DegenerateMarginal {
            p: quad.p(),
            q: quad.q(),
        });
    }
    let (p, q) = (quad.p(), quad.q());
    Ok((rho * (q - 0.5) / (q * (1.0 - q)), rho * (p - 0.5) / (p * (1.0 - p))))
}

/// Plug-in statistics of one record. Correlation fields are 0 and
/// `degenerate` is set when a marginal is within [`DEGENERATE_TOL`] of 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerObsStats {
    pub quad: ProbQuad,
    pub cov: f64,
    pub rho: f64,
    pub grad1: f64,
    pub grad2: f64,
    pub degenerate: bool,
}

impl PerObsStats {
    pub fn new(quad: ProbQuad) -> Self {
        let cov = covariance_from_quad(&quad);
        match correlation_from_quad(&quad) {
            Ok(rho) => {
                let (grad1, grad2) = gradient_regressors(&quad, rho).expect("nondegenerate");
                PerObsStats {
                    quad,
                    cov,
                    rho,
                    grad1,
                    grad2,
                    degenerate: false,
                }
            }
            Err(_) => PerObsStats {
                quad,
                cov,
                rho: 0.0,
                grad1: 0.0,
                grad2: 0.0,
                degenerate: true,
            },
        }
    }

    pub fn statistic(&self, kind: StatisticKind) -> f64 {
        match kind {
            StatisticKind::Covariance => self.cov,
            StatisticKind::Correlation => self.rho,
        }
    }

    /// `(c − p̂)(r − q̂)`, whose conditional mean is `C` up to the product of
    /// the two marginal errors.
    pub fn covariance_score(&self, c: bool, r: bool) -> f64 {
        (f64::from(u8::from(c)) - self.quad.p()) * (f64::from(u8::from(r)) - self.quad.q())
    }

    /// `(c − p̂)(r − q̂)/ŝ + ∇₂(c − p̂) + ∇₁(r − q̂)` with `ŝ = √(p̂(1−p̂)q̂(1−q̂))`:
    /// the plug-in correlation corrected by its first-order expansion in the
    /// outcome residuals.
    pub fn correlation_score(&self, c: bool, r: bool) -> f64 {
        let (p, q) = (self.quad.p(), self.quad.q());
        let s = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
        let (ec, er) = (f64::from(u8::from(c)) - p, f64::from(u8::from(r)) - q);
        ec * er / s + self.grad2 * ec + self.grad1 * er
    }
}

pub fn per_obs_stats(quads: &[ProbQuad]) -> Vec<PerObsStats> {
    quads.iter().map(|q| PerObsStats::new(*q)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub label: String,
    pub kind: EstimateKind,
    pub estimate: f64,
    pub se: f64,
    /// Records used.
    pub n: usize,
    /// `(Σw)² / Σw²`.
    pub effective_size: f64,
}

/// Weighted mean of `values` over `group` with standard error
/// `√(Σ w²(v − β)²) / Σ w`.
pub fn group_mean(
    values: &[f64],
    weights: &[f64],
    group: &[usize],
    kind: EstimateKind,
    label: &str,
) -> Result<GroupEstimate> {
    if group.is_empty() {
        return Err(Error::Invalid(format!("group `{label}` is empty")));
    }
    let (mut sw, mut sw2, mut swv) = (0.0, 0.0, 0.0);
    for &i in group {
        sw += weights[i];
        sw2 += weights[i] * weights[i];
        swv += weights[i] * values[i];
    }
    let beta = swv / sw;
    let ss: f64 = group.iter().map(|&i| (weights[i] * (values[i] - beta)).powi(2)).sum();
    Ok(GroupEstimate {
        label: label.to_string(),
        kind,
        estimate: beta,
        se: ss.sqrt() / sw,
        n: group.len(),
        effective_size: sw * sw / sw2,
    })
}

/// Result of a weighted regression on a constant and the gradient terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasFit {
    /// Intercept followed by the retained slopes.
    pub coefficients: Vec<f64>,
    /// Regressors kept: 0 = ∇₁, 1 = ∇₂.
    pub kept: Vec<usize>,
    pub intercept_se: f64,
    pub residuals: Vec<f64>,
}

/// Weighted least squares of `response` on `(1, ∇₁, ∇₂)` over `rows`,
/// dropping ∇₂ and then ∇₁ when the design is numerically rank-deficient;
/// heteroskedasticity-robust (HC0) standard error for the intercept.
pub fn debias_regression(
    response: &[f64],
    stats: &[PerObsStats],
    weights: &[f64],
    rows: &[usize],
) -> Result<DebiasFit> {
    let regressor = |i: usize, k: usize| if k == 0 { stats[i].grad1 } else { stats[i].grad2 };
    for kept in [vec![0, 1], vec![0], vec![]] {
        let cols = 1 + kept.len();
        if rows.len() < cols {
            continue;
        }
        let x = DMatrix::from_fn(rows.len(), cols, |a, b| {
            if b == 0 {
                1.0
            } else {
                regressor(rows[a], kept[b - 1])
            }
        });
        let sw = DVector::from_iterator(rows.len(), rows.iter().map(|&i| weights[i].sqrt()));
        let xw = DMatrix::from_fn(rows.len(), cols, |a, b| x[(a, b)] * sw[a]);
        let sv = xw.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin / smax < COLLINEARITY_TOL {
            continue;
        }
        let yw = DVector::from_iterator(rows.len(), rows.iter().zip(sw.iter()).map(|(&i, s)| response[i] * s));
        let beta = xw
            .clone()
            .svd(true, true)
            .solve(&yw, 0.0)
            .map_err(|e| Error::Numerical(format!("weighted least squares: {e}")))?;
        let residuals: Vec<f64> = (0..rows.len())
            .map(|a| response[rows[a]] - (0..cols).map(|b| x[(a, b)] * beta[b]).sum::<f64>())
            .collect();
        let xtwx = xw.transpose() * &xw;
        let bread = xtwx
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular normal equations".into()))?;
        let mut meat = DMatrix::zeros(cols, cols);
        for a in 0..rows.len() {
            let s = weights[rows[a]] * residuals[a];
            for j in 0..cols {
                for k in 0..cols {
                    meat[(j, k)] += s * s * x[(a, j)] * x[(a, k)];
                }
            }
        }
        let v = &bread * meat * &bread;
        return Ok(DebiasFit {
            coefficients: beta.iter().copied().collect(),
            kept,
            intercept_se: v[(0, 0)].max(0.0).sqrt(),
            residuals,
        });
    }
    Err(Error::RankDeficient(
        "debiasing design is rank-deficient even without regressors".into(),
    ))
}

/// Intercept of the weighted regression of `response` on `(1, ∇₁, ∇₂)` over
/// the nondegenerate records of `group`.
pub fn debiased_group_correlation(
    response: &[f64],
    stats: &[PerObsStats],
    weights: &[f64],
    group: &[usize],
    label: &str,
) -> Result<GroupEstimate> {
    let rows: Vec<usize> = group.iter().copied().filter(|&i| !stats[i].degenerate).collect();
    if rows.len() < 3 {
        return Err(Error::Invalid(format!(
            "group `{label}` has {} usable records; the debiased correlation needs 3",
            rows.len()
        )));
    }
    let fit = debias_regression(response, stats, weights, &rows)?;
    let sw: f64 = rows.iter().map(|&i| weights[i]).sum();
    let sw2: f64 = rows.iter().map(|&i| weights[i] * weights[i]).sum();
    Ok(GroupEstimate {
        label: label.to_string(),
        kind: EstimateKind::DebiasedCorrelation,
        estimate: fit.coefficients[0],
        se: fit.intercept_se,
        n: rows.len(),
        effective_size: sw * sw / sw2,
    })
}

/// Group estimates of `kind` from per-record quads of `d`.
///
/// Covariance: weighted mean of `(c − p̂)(r − q̂)`. Naive correlation:
/// weighted mean of the plug-in `ρ̂`. Debiased correlation: regression of
/// the outcome-corrected correlation score on `(1, ∇₁, ∇₂)`.
pub fn group_estimates(
    d: &Dataset,
    quads: &[ProbQuad],
    groups: &[Group],
    kind: EstimateKind,
) -> Result<Vec<GroupEstimate>> {
    if quads.len() != d.len() {
        return Err(Error::Invalid("one quad per record required".into()));
    }
    let stats = per_obs_stats(quads);
    let weights = d.weights();
    let recs = d.records();
    let values: Vec<f64> = match kind {
        EstimateKind::Covariance => stats
            .iter()
            .zip(recs)
            .map(|(s, r)| s.covariance_score(r.c, r.r))
            .collect(),
        EstimateKind::NaiveCorrelation => stats.iter().map(|s| s.rho).collect(),
        EstimateKind::DebiasedCorrelation => stats
            .iter()
            .zip(recs)
            .map(|(s, r)| {
                if s.degenerate {
                    0.0
                } else {
                    s.correlation_score(r.c, r.r)
                }
            })
            .collect(),
    };
    groups
        .iter()
        .map(|g| match kind {
            EstimateKind::Covariance => group_mean(&values, &weights, &g.indices, kind, &g.label),
            EstimateKind::NaiveCorrelation => {
                let rows: Vec<usize> = g.indices.iter().copied().filter(|&i| !stats[i].degenerate).collect();
                group_mean(&values, &weights, &rows, kind, &g.label)
            }
            EstimateKind::DebiasedCorrelation => {
                debiased_group_correlation(&values, &stats, &weights, &g.indices, &g.label)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionSummary {
    pub mean: f64,
    /// Weighted standard deviation `√(Σ w(v − m)² / Σ w)`.
    pub dispersion: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64], weights: &[f64]) -> Result<FunctionSummary> {
    if values.is_empty() {
        return Err(Error::Invalid("cannot summarize an empty statistic".into()));
    }
    let sw: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / sw;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / sw;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(FunctionSummary {
            mean: min,
            dispersion: 0.0,
            min,
            max,
        });
    }
    Ok(FunctionSummary {
        mean: mean.clamp(min, max),
        dispersion: var.sqrt(),
        min,
        max,
    })
}

/// Weighted empirical quad of each record's covariate cell.
pub fn empirical_cell_quads(d: &Dataset) -> Vec<ProbQuad> {
    let mut cells: BTreeMap<&[usize], [f64; 4]> = BTreeMap::new();
    for r in d.records() {
        cells.entry(&r.levels).or_insert([0.0; 4])[r.class()] += r.w;
    }
    let quads: BTreeMap<&[usize], ProbQuad> = cells
        .into_iter()
        .map(|(k, m)| {
            let t: f64 = m.iter().sum();
            (
                k,
                ProbQuad {
                    p00: m[0] / t,
                    p01: m[1] / t,
                    p10: m[2] / t,
                    p11: m[3] / t,
                },
            )
        })
        .collect();
    d.records().iter().map(|r| quads[r.levels.as_slice()]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalDerivative {
    pub kind: EstimateKind,
    /// Largest absolute derivative over the sampled directions.
    pub max_abs: f64,
    pub per_direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub step: f64,
    pub directions: usize,
    pub derivatives: Vec<DirectionalDerivative>,
}

impl OrthogonalityReport {
    pub fn get(&self, kind: EstimateKind) -> &DirectionalDerivative {
        self.derivatives
            .iter()
            .find(|d| d.kind == kind)
            .expect("all kinds reported")
    }
}

pub const ORTHOGONALITY_STEP: f64 = 1e-4;

/// Expected group estimate over the outcome law `truth` when nuisance quads
/// `eta` are plugged in.
fn population_estimate(kind: EstimateKind, truth: &[ProbQuad], eta: &[ProbQuad], weights: &[f64]) -> Result<f64> {
    let stats = per_obs_stats(eta);
    let all: Vec<usize> = (0..eta.len()).collect();
    let expected: Vec<f64> = stats
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let (p, q) = (s.quad.p(), s.quad.q());
            let (p0, q0) = (t.p(), t.q());
            let cov_score = t.p11 - q * p0 - p * q0 + p * q;
            match kind {
                EstimateKind::Covariance => cov_score,
                EstimateKind::NaiveCorrelation => s.rho,
                EstimateKind::DebiasedCorrelation => {
                    let sd = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
                    cov_score / sd + s.grad2 * (p0 - p) + s.grad1 * (q0 - q)
                }
            }
        })
        .collect();
    match kind {
        EstimateKind::DebiasedCorrelation => Ok(debias_regression(&expected, &stats, weights, &all)?.coefficients[0]),
        _ => Ok(group_mean(&expected, weights, &all, kind, "all")?.estimate),
    }
}

/// Central-difference derivative, along random directions in the nuisance
/// quads, of each group estimate's population value on a sample of
/// covariates from `dgp`. The outcome law is the DGP's true quads.
pub fn orthogonality_check(dgp: &SyntheticDgp, n: usize, directions: usize, seed: u64) -> Result<OrthogonalityReport> {
    use rand::Rng as _;
    let (d, truth) = dgp.sample_dataset(n, seed)?;
    let truth: Vec<ProbQuad> = truth.per_record(&d)?.into_iter().map(|t| t.quad).collect();
    let weights = d.weights();
    let h = ORTHOGONALITY_STEP;
    let kinds = [
        EstimateKind::Covariance,
        EstimateKind::NaiveCorrelation,
        EstimateKind::DebiasedCorrelation,
    ];
    let mut per_kind: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    for k in 0..directions {
        let mut r = rng::stream(seed, tags::DIRECTION, k as u64);
        let delta: Vec<[f64; 4]> = (0..d.len())
            .map(|_| {
                let mut v: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
                let mean = v.iter().sum::<f64>() / 4.0;
                v.iter_mut().for_each(|x| *x -= mean);
                v
            })
            .collect();
        let shift = |eps: f64| -> Vec<ProbQuad> {
            truth
                .iter()
                .zip(&delta)
                .map(|(t, dv)| ProbQuad {
                    p00: t.p00 + eps * dv[0],
                    p01: t.p01 + eps * dv[1],
                    p10: t.p10 + eps * dv[2],
                    p11: t.p11 + eps * dv[3],
                })
                .collect()
        };
        let (up, down) = (shift(h), shift(-h));
        for (slot, &kind) in kinds.iter().enumerate() {
            let a = population_estimate(kind, &truth, &up, &weights)?;
            let b = population_estimate(kind, &truth, &down, &weights)?;
            per_kind[slot].push((a - b) / (2.0 * h));
        }
    }
    Ok(OrthogonalityReport {
        step: h,
        directions,
        derivatives: kinds
            .iter()
            .zip(per_kind)
            .map(|(&kind, per_direction)| DirectionalDerivative {
                kind,
                max_abs: per_direction.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
                per_direction,
            })
            .collect(),
    })
}
