//! Tests of the positive correlation property: the intersection test over
//! group estimates and the sorted-groups test.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{partition, partition_by_value, split_two, Dataset, Encoder, GroupScheme, SplitPlan};
use crate::error::{Error, Result};
use crate::functionals::{
    correlation_from_quad, covariance_from_quad, group_estimates, group_mean, per_obs_stats, EstimateKind,
    GroupEstimate, StatisticKind,
};
use crate::learners::hyperopt::{hyperopt_network, HyperGrid};
use crate::learners::{cross_fit_predict, train_learner, LearnerConfig, Target};
use crate::quad::ProbQuad;
use crate::rng::{self, tags};
use crate::synth::SyntheticDgp;

pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `γₙ = 1 − 0.1 / ln n`.
pub fn gamma_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid(format!("γₙ needs n ≥ 2, got {n}")));
    }
    Ok(1.0 - 0.1 / (n as f64).ln())
}

/// `Φ⁻¹(γ^{1/L})`, the γ-quantile of the maximum of `L` independent
/// standard normals.
pub fn analytic_k0(l: usize, gamma: f64) -> Result<f64> {
    if l == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Invalid(format!(
            "analytic k0 needs L ≥ 1 and γ in (0,1), got L = {l}, γ = {gamma}"
        )));
    }
    Ok(std_normal().inverse_cdf(gamma.powf(1.0 / l as f64)))
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, prob)
}

/// Median (type 7).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Standard normal draws `ξ_r`, row-major `R × L`.
#[derive(Debug, Clone)]
pub struct NormalDraws {
    pub l: usize,
    pub r: usize,
    values: Vec<f64>,
}

impl NormalDraws {
    pub fn new(l: usize, r: usize, seed: u64) -> Self {
        let mut g = rng::stream(seed, tags::MC_DRAWS, 0);
        let values = (0..l * r).map(|_| g.sample::<f64, _>(StandardNormal)).collect();
        NormalDraws { l, r, values }
    }

    /// `max_{l ∈ set} ξ_{rl}` for every draw, sorted ascending.
    pub fn sorted_maxima(&self, set: &[usize]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .values
            .chunks(self.l)
            .map(|row| set.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionInput {
    pub estimates: Vec<f64>,
    pub ses: Vec<f64>,
    /// Sample size entering `γₙ`.
    pub n: usize,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub alpha: f64,
    pub gamma: f64,
    pub k0: f64,
    /// Selected groups `L̂` (0-based).
    pub selected: Vec<usize>,
    pub k: f64,
    /// `min_{l ∈ L̂} (T̂_l + k σ̂_l)`.
    pub statistic: f64,
    pub rejected: bool,
    pub ci: (f64, f64),
    /// The upper bound fell below the lower one and was raised to it.
    pub ci_clamped: bool,
}

fn check_groups(estimates: &[f64], ses: &[f64]) -> Result<()> {
    if estimates.is_empty() || estimates.len() != ses.len() {
        return Err(Error::Invalid(
            "need one standard error per group estimate, and at least one group".into(),
        ));
    }
    if let Some(l) = ses.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Invalid(format!(
            "standard error of group {} is not positive",
            l + 1
        )));
    }
    if let Some(l) = estimates.iter().position(|t| !t.is_finite()) {
        return Err(Error::Invalid(format!("estimate of group {} is not finite", l + 1)));
    }
    Ok(())
}

/// Intersection test at several levels sharing one set of draws.
pub fn intersection_test_levels(
    estimates: &[f64],
    ses: &[f64],
    n: usize,
    alphas: &[f64],
    draws: &NormalDraws,
) -> Result<Vec<IntersectionResult>> {
    check_groups(estimates, ses)?;
    let l = estimates.len();
    if draws.l != l || draws.r == 0 {
        return Err(Error::Invalid(format!("draws have {} columns for {l} groups", draws.l)));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Config(format!("test level {a} outside (0,1)")));
    }
    let gamma = gamma_n(n)?;
    let all: Vec<usize> = (0..l).collect();
    let k0 = quantile_sorted(&draws.sorted_maxima(&all), gamma);
    let bound = (0..l).map(|m| estimates[m] + k0 * ses[m]).fold(f64::INFINITY, f64::min);
    let selected: Vec<usize> = (0..l).filter(|&j| estimates[j] <= bound + 2.0 * k0 * ses[j]).collect();
    let maxima = draws.sorted_maxima(&selected);
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let k = quantile_sorted(&maxima, 1.0 - alpha);
            let statistic = selected
                .iter()
                .map(|&j| estimates[j] + k * ses[j])
                .fold(f64::INFINITY, f64::min);
            let a = (0..l).map(|j| estimates[j] + k * ses[j]).fold(f64::INFINITY, f64::min);
            let b = (0..l)
                .map(|j| estimates[j] - k * ses[j])
                .fold(f64::NEG_INFINITY, f64::max);
            IntersectionResult {
                alpha,
                gamma,
                k0,
                selected: selected.clone(),
                k,
                statistic,
                rejected: statistic < 0.0,
                ci: (a, b.max(a)),
                ci_clamped: b < a,
            }
        })
        .collect())
}

pub fn intersection_test(input: &IntersectionInput) -> Result<IntersectionResult> {
    check_groups(&input.estimates, &input.ses)?;
    let draws = NormalDraws::new(input.estimates.len(), input.draws, input.seed);
    Ok(intersection_test_levels(&input.estimates, &input.ses, input.n, &[input.alpha], &draws)?.remove(0))
}

/// `√(∇g' Σ ∇g)` for `g` the covariance or correlation of the quad.
pub fn delta_method_se(quad: &ProbQuad, sigma: &[[f64; 4]; 4], kind: StatisticKind) -> Result<f64> {
    let grad = statistic_gradient(quad, kind)?;
    let mut v = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            v += grad[a] * sigma[a][b] * grad[b];
        }
    }
    Ok(v.max(0.0).sqrt())
}

/// Gradient of the statistic in `(p00, p01, p10, p11)`, each treated as free.
pub fn statistic_gradient(quad: &ProbQuad, kind: StatisticKind) -> Result<[f64; 4]> {
    let (p, q) = (quad.p(), quad.q());
    let dc = [0.0, -p, -q, 1.0 - p - q];
    match kind {
        StatisticKind::Covariance => Ok(dc),
        StatisticKind::Correlation => {
            let rho = correlation_from_quad(quad)?;
            let s = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
            let g1 = rho * (q - 0.5) / (q * (1.0 - q));
            let g2 = rho * (p - 0.5) / (p * (1.0 - p));
            Ok([dc[0] / s, dc[1] / s + g1, dc[2] / s + g2, dc[3] / s + g1 + g2])
        }
    }
}

pub fn statistic_of(quad: &ProbQuad, kind: StatisticKind) -> Result<f64> {
    match kind {
        StatisticKind::Covariance => Ok(covariance_from_quad(quad)),
        StatisticKind::Correlation => correlation_from_quad(quad),
    }
}

/// Weighted outcome-class shares of `rows` and the covariance matrix of
/// those shares, `Σ w²(y_a − p̄_a)(y_b − p̄_b) / (Σ w)²`.
pub fn group_class_shares(d: &Dataset, rows: &[usize]) -> Result<(ProbQuad, [[f64; 4]; 4])> {
    if rows.is_empty() {
        return Err(Error::Invalid("empty group".into()));
    }
    let recs = d.records();
    let mut mass = [0.0; 4];
    let mut sw = 0.0;
    for &i in rows {
        mass[recs[i].class()] += recs[i].w;
        sw += recs[i].w;
    }
    let pbar = mass.map(|m| m / sw);
    let mut sigma = [[0.0; 4]; 4];
    for &i in rows {
        let w2 = recs[i].w * recs[i].w;
        let k = recs[i].class();
        let e: [f64; 4] = std::array::from_fn(|a| f64::from(u8::from(a == k)) - pbar[a]);
        for a in 0..4 {
            for b in 0..4 {
                sigma[a][b] += w2 * e[a] * e[b];
            }
        }
    }
    for row in &mut sigma {
        for v in row.iter_mut() {
            *v /= sw * sw;
        }
    }
    Ok((
        ProbQuad {
            p00: pbar[0],
            p01: pbar[1],
            p10: pbar[2],
            p11: pbar[3],
        },
        sigma,
    ))
}

/// How the auxiliary-sample model is chosen in each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Selection {
    /// Run the network grid search on every auxiliary sample.
    FullGrid { grid: HyperGrid },
    /// Train the configured learner as is.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedGroupsConfig {
    pub groups: usize,
    pub splits: usize,
    pub main_fraction: f64,
    pub statistic: StatisticKind,
    pub learner: LearnerConfig,
    pub selection: Selection,
    /// Fresh main/auxiliary draws allowed when a group comes out empty.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for SortedGroupsConfig {
    fn default() -> Self {
        SortedGroupsConfig {
            groups: 4,
            splits: 101,
            main_fraction: 0.5,
            statistic: StatisticKind::Covariance,
            learner: LearnerConfig::Network(Default::default()),
            selection: Selection::FullGrid {
                grid: HyperGrid::default(),
            },
            max_retries: 10,
            seed: 0,
        }
    }
}

impl SortedGroupsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups < 2 || self.splits == 0 {
            return Err(Error::Config("sorted groups need at least 2 groups and 1 split".into()));
        }
        if !(self.main_fraction > 0.0 && self.main_fraction < 1.0) {
            return Err(Error::Config("main-sample fraction must lie in (0,1)".into()));
        }
        if matches!(self.selection, Selection::FullGrid { .. }) && !matches!(self.learner, LearnerConfig::Network(_)) {
            return Err(Error::Config("grid selection applies to the network learner".into()));
        }
        self.learner.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedGroup {
    pub quad: ProbQuad,
    pub statistic: f64,
    pub se: f64,
    /// Weighted mean of the predicted statistic in the group.
    pub predicted_mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub attempts: usize,
    pub groups: Vec<SortedGroup>,
    /// Statistic of the lowest group and its test.
    pub statistic: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    /// Dataset indices of the lowest group.
    #[serde(skip)]
    pub first_group: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedGroupsResult {
    pub statistic_kind: StatisticKind,
    pub splits: Vec<SplitResult>,
    pub median_statistic: f64,
    pub median_se: f64,
    pub median_z: f64,
    pub median_p_value: f64,
    pub p_value_convention: String,
}

pub const P_VALUE_CONVENTION: &str = "one-sided: p = Phi(z), H0: statistic >= 0 against < 0";

/// `Φ(z)` for `z = g / SE`; a zero standard error gives `z = ±∞` by sign.
fn one_sided(statistic: f64, se: f64) -> (f64, f64) {
    let z = if se > 0.0 {
        statistic / se
    } else if statistic < 0.0 {
        f64::NEG_INFINITY
    } else if statistic > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (z, std_normal().cdf(z))
}

fn sorted_split(d: &Dataset, cfg: &SortedGroupsConfig, s: usize) -> Result<SplitResult> {
    let split_seed = rng::derive_seed(cfg.seed, tags::SORTED_SPLIT, s as u64);
    let encoder = Encoder::new(d.schema());
    let mut last_err = None;
    for attempt in 0..=cfg.max_retries {
        let (main, aux) = split_two(d.len(), cfg.main_fraction, split_seed, attempt as u64)?;
        let aux_d = d.subset(&aux)?;
        let model_seed = rng::derive_seed(split_seed, tags::INIT, attempt as u64);
        let model = match (&cfg.selection, &cfg.learner) {
            (Selection::FullGrid { grid }, LearnerConfig::Network(base)) => {
                let base = crate::learners::NetworkConfig {
                    seed: model_seed,
                    ..base.clone()
                };
                hyperopt_network(&aux_d, grid, &SplitPlan::standard(model_seed), &base)?.model
            }
            _ => train_learner(
                &cfg.learner.with_seed(model_seed),
                &aux_d,
                None,
                &encoder,
                Target::Joint,
            )?,
        };
        let main_d = d.subset(&main)?;
        let stats = per_obs_stats(&model.predict_quads(&main_d)?);
        let predicted: Vec<f64> = stats
            .iter()
            .map(|st| match cfg.statistic {
                StatisticKind::Covariance => st.cov,
                StatisticKind::Correlation if st.degenerate => f64::NAN,
                StatisticKind::Correlation => st.rho,
            })
            .collect();
        let weights = main_d.weights();
        let groups = match partition_by_value(&predicted, &weights, cfg.groups) {
            Ok(g) => g,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut out = Vec::with_capacity(groups.len());
        for g in &groups {
            let (quad, sigma) = group_class_shares(&main_d, &g.indices)?;
            let statistic = statistic_of(&quad, cfg.statistic)?;
            let se = delta_method_se(&quad, &sigma, cfg.statistic)?;
            let predicted_mean =
                group_mean(&predicted, &weights, &g.indices, EstimateKind::Covariance, &g.label)?.estimate;
            out.push(SortedGroup {
                quad,
                statistic,
                se,
                predicted_mean,
                n: g.indices.len(),
            });
        }
        let (statistic, se) = (out[0].statistic, out[0].se);
        let (z, p_value) = one_sided(statistic, se);
        return Ok(SplitResult {
            split: s,
            attempts: attempt + 1,
            groups: out,
            statistic,
            se,
            z,
            p_value,
            first_group: groups[0].indices.iter().map(|&i| main[i]).collect(),
        });
    }
    Err(last_err.unwrap_or_else(|| Error::Invalid("sorted groups: no usable split".into())))
}

/// Repeated main/auxiliary splits; in each, the auxiliary model ranks the
/// main sample into groups by the predicted statistic and the lowest group's
/// statistic is tested. Medians are taken over splits.
pub fn sorted_groups_run(d: &Dataset, cfg: &SortedGroupsConfig) -> Result<SortedGroupsResult> {
    cfg.validate()?;
    let splits: Vec<SplitResult> = (0..cfg.splits)
        .into_par_iter()
        .map(|s| sorted_split(d, cfg, s))
        .collect::<Result<_>>()?;
    let col = |f: fn(&SplitResult) -> f64| median(&splits.iter().map(f).collect::<Vec<_>>());
    Ok(SortedGroupsResult {
        statistic_kind: cfg.statistic,
        median_statistic: col(|s| s.statistic),
        median_se: col(|s| s.se),
        median_z: col(|s| s.z),
        median_p_value: col(|s| s.p_value),
        p_value_convention: P_VALUE_CONVENTION.into(),
        splits,
    })
}

/// Cross-fitted quads, a partition, and the group estimates of `kind`.
pub fn cross_fitted_group_estimates(
    d: &Dataset,
    learner: &LearnerConfig,
    folds: usize,
    scheme: &GroupScheme,
    kind: EstimateKind,
    seed: u64,
) -> Result<Vec<GroupEstimate>> {
    let fa = crate::data::make_folds(d, folds, seed)?;
    let quads = cross_fit_predict(d, learner, &fa)?;
    let groups = partition(d, scheme)?;
    group_estimates(d, &quads, &groups, kind)
}

/// Groups with independent Gaussian observations: group `l` has
/// `sizes[l]` draws from `N(means[l], sigma²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDesign {
    pub means: Vec<f64>,
    pub sigma: f64,
    pub sizes: Vec<usize>,
}

/// Synthetic datasets from `dgp`, cross-fitted learner, group estimates and
/// the intersection test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDesign {
    pub dgp: SyntheticDgp,
    pub n: usize,
    pub scheme: GroupScheme,
    pub learner: LearnerConfig,
    pub folds: usize,
    pub kind: EstimateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum McDesign {
    Gaussian(GaussianDesign),
    Pipeline(PipelineDesign),
}

/// One replication of the pipeline design: estimates, true group means
/// (weighted sample averages of the true statistic) and the test.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReplication {
    pub estimates: Vec<GroupEstimate>,
    pub truth: Vec<f64>,
    pub test: IntersectionResult,
}

pub fn pipeline_replication(
    design: &PipelineDesign,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<PipelineReplication> {
    let (d, gt) = design.dgp.sample_dataset(design.n, seed)?;
    let learner = design.learner.with_seed(rng::derive_seed(seed, tags::INIT, 0));
    let estimates = cross_fitted_group_estimates(&d, &learner, design.folds, &design.scheme, design.kind, seed)?;
    let per_record = gt.per_record(&d)?;
    let truth_values: Vec<f64> = per_record
        .iter()
        .map(|t| match design.kind {
            EstimateKind::Covariance => t.cov,
            _ => t.rho,
        })
        .collect();
    let weights = d.weights();
    let truth = partition(&d, &design.scheme)?
        .iter()
        .map(|g| Ok(group_mean(&truth_values, &weights, &g.indices, design.kind, &g.label)?.estimate))
        .collect::<Result<Vec<f64>>>()?;
    let t: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let s: Vec<f64> = estimates.iter().map(|e| e.se).collect();
    let nd = NormalDraws::new(t.len(), draws, seed);
    let test = intersection_test_levels(&t, &s, design.n, &[alpha], &nd)?.remove(0);
    Ok(PipelineReplication { estimates, truth, test })
}

fn gaussian_replication(design: &GaussianDesign, alpha: f64, draws: usize, seed: u64) -> Result<IntersectionResult> {
    if design.means.len() != design.sizes.len() || design.means.is_empty() {
        return Err(Error::Config("one size per group mean required".into()));
    }
    let mut g = rng::stream(seed, tags::SAMPLE, 0);
    let mut t = Vec::with_capacity(design.means.len());
    let mut s = Vec::with_capacity(design.means.len());
    for (&mu, &size) in design.means.iter().zip(&design.sizes) {
        let values: Vec<f64> = (0..size)
            .map(|_| mu + design.sigma * g.sample::<f64, _>(StandardNormal))
            .collect();
        let est = group_mean(
            &values,
            &vec![1.0; size],
            &(0..size).collect::<Vec<_>>(),
            EstimateKind::Covariance,
            "g",
        )?;
        t.push(est.estimate);
        s.push(est.se);
    }
    let n = design.sizes.iter().sum();
    let nd = NormalDraws::new(t.len(), draws, seed);
    Ok(intersection_test_levels(&t, &s, n, &[alpha], &nd)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    /// `√(rate(1 − rate)/reps)`.
    pub binomial_se: f64,
}

impl RejectionReport {
    pub fn from_decisions(decisions: &[bool]) -> Self {
        let reps = decisions.len();
        let rejections = decisions.iter().filter(|&&r| r).count();
        let rate = rejections as f64 / reps as f64;
        RejectionReport {
            reps,
            rejections,
            rate,
            binomial_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        }
    }
}

/// Rejection frequency of the intersection test over fresh replications.
pub fn mc_size_power(design: &McDesign, alpha: f64, reps: usize, draws: usize, seed: u64) -> Result<RejectionReport> {
    if reps < 100 {
        return Err(Error::Config(format!("at least 100 replications required, got {reps}")));
    }
    let decisions: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = rng::derive_seed(seed, tags::REPLICATION, i as u64);
            match design {
                McDesign::Gaussian(g) => gaussian_replication(g, alpha, draws, s).map(|r| r.rejected),
                McDesign::Pipeline(p) => pipeline_replication(p, alpha, draws, s).map(|r| r.test.rejected),
            }
        })
        .collect::<Result<_>>()?;
    Ok(RejectionReport::from_decisions(&decisions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_at_the_sample_size() {
        assert_abs_diff_eq!(gamma_n(6333).unwrap(), 0.9885760364584788, epsilon = 1e-15);
        assert!(gamma_n(1).is_err());
        assert!(gamma_n(2).unwrap() > 0.0);
    }

    #[test]
    fn analytic_critical_values() {
        assert_abs_diff_eq!(analytic_k0(1, 0.95).unwrap(), 1.6448536269514722, epsilon = 1e-8);
        let g = gamma_n(6333).unwrap();
        for (l, v) in [
            (1, 2.2759679643667083),
            (2, 2.528448847591264),
            (4, 2.76246813077107),
            (12, 3.103256519976753),
        ] {
            assert_abs_diff_eq!(analytic_k0(l, g).unwrap(), v, epsilon = 1e-8);
        }
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn deep_null_is_not_rejected() {
        for alpha in [0.01, 0.05, 0.10] {
            let r = intersection_test(&IntersectionInput {
                estimates: vec![1.0; 4],
                ses: vec![0.01; 4],
                n: 6333,
                alpha,
                draws: 10_000,
                seed: 1,
            })
            .unwrap();
            assert!(!r.rejected);
            assert_eq!(r.selected, vec![0, 1, 2, 3]);
            assert!(r.ci.0 <= r.ci.1);
        }
    }

    #[test]
    fn single_group_reduces_to_one_sided_normal() {
        let r = intersection_test(&IntersectionInput {
            estimates: vec![-0.5],
            ses: vec![0.3],
            n: 6333,
            alpha: 0.05,
            draws: 100_000,
            seed: 7,
        })
        .unwrap();
        assert_abs_diff_eq!(r.k, 1.6449, epsilon = 0.02);
        assert_eq!(r.rejected, -0.5 + r.k * 0.3 < 0.0);
        assert!(r.ci_clamped);
    }

    #[test]
    fn covariance_gradient_matches_finite_differences() {
        let q = ProbQuad::uniform();
        for kind in [StatisticKind::Covariance, StatisticKind::Correlation] {
            let g = statistic_gradient(&q, kind).unwrap();
            for k in 0..4 {
                let h = 1e-6;
                let mut a = q.to_array();
                let mut b = q.to_array();
                a[k] += h;
                b[k] -= h;
                let f = |v: [f64; 4]| {
                    let (p, qq) = (v[2] + v[3], v[1] + v[3]);
                    let c = v[3] - p * qq;
                    match kind {
                        StatisticKind::Covariance => c,
                        StatisticKind::Correlation => c / (p * (1.0 - p) * qq * (1.0 - qq)).sqrt(),
                    }
                };
                assert_abs_diff_eq!(g[k], (f(a) - f(b)) / (2.0 * h), epsilon = 1e-6);
            }
        }
        assert_eq!(
            delta_method_se(&q, &[[0.0; 4]; 4], StatisticKind::Covariance).unwrap(),
            0.0
        );
    }
}
