//! Browser demo: quad explorer, critical-value curve and an intersection test
//! on user-supplied group estimates. Every export returns a JSON string; on
//! failure the object carries an `error` field instead.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pcp_core::functionals::{correlation_from_quad, covariance_from_quad};
use pcp_core::inference::{analytic_k0, gamma_n, intersection_test_levels, quantile_sorted, NormalDraws};
use pcp_core::synth::{quad_from_marginals, rho_bounds};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadView {
    pub p: f64,
    pub q: f64,
    pub rho: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `[p00, p01, p10, p11]`, absent when `rho` is outside the bounds.
    pub quad: Option<[f64; 4]>,
    pub covariance: Option<f64>,
    pub correlation: Option<f64>,
}

/// The joint distribution of (coverage, claim) with marginals `p`, `q` and
/// correlation `rho`, with the attainable correlation range.
pub fn quad_view(p: f64, q: f64, rho: f64) -> Result<QuadView, String> {
    if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
        return Err("p and q must lie strictly between 0 and 1".into());
    }
    let (rho_min, rho_max) = rho_bounds(p, q);
    let quad = quad_from_marginals(p, q, rho);
    Ok(QuadView {
        p,
        q,
        rho,
        rho_min,
        rho_max,
        quad: quad.map(|x| x.to_array()),
        covariance: quad.map(|x| covariance_from_quad(&x)),
        correlation: quad.and_then(|x| correlation_from_quad(&x).ok()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub groups: usize,
    pub analytic: f64,
    pub monte_carlo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCurve {
    pub n: usize,
    pub gamma: f64,
    pub points: Vec<CriticalPoint>,
}

/// `k₀` against the number of groups, analytic and simulated from `draws`
/// standard normal vectors.
pub fn critical_curve(n: usize, max_groups: usize, draws: usize, seed: u64) -> Result<CriticalCurve, String> {
    if max_groups == 0 || max_groups > 64 || draws == 0 || draws > 200_000 {
        return Err("groups must be in 1..=64 and draws in 1..=200000".into());
    }
    let gamma = gamma_n(n).map_err(|e| e.to_string())?;
    let sim = NormalDraws::new(max_groups, draws, seed);
    let points = (1..=max_groups)
        .map(|l| {
            let set: Vec<usize> = (0..l).collect();
            Ok(CriticalPoint {
                groups: l,
                analytic: analytic_k0(l, gamma).map_err(|e| e.to_string())?,
                monte_carlo: quantile_sorted(&sim.sorted_maxima(&set), gamma),
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(CriticalCurve { n, gamma, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestView {
    pub alpha: f64,
    pub k0: f64,
    pub k: f64,
    /// 1-based selected groups.
    pub selected: Vec<usize>,
    pub statistic: f64,
    pub rejected: bool,
    pub ci: (f64, f64),
    pub ci_clamped: bool,
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect()
}

/// Intersection test on comma- or space-separated estimates and standard
/// errors.
pub fn run_test(estimates: &str, ses: &str, n: usize, alpha: f64, draws: usize, seed: u64) -> Result<TestView, String> {
    let est = parse_list(estimates)?;
    let se = parse_list(ses)?;
    if est.len() != se.len() {
        return Err(format!("{} estimates but {} standard errors", est.len(), se.len()));
    }
    if est.is_empty() || est.len() > 64 || draws == 0 || draws > 200_000 {
        return Err("need 1 to 64 groups and 1 to 200000 draws".into());
    }
    let sim = NormalDraws::new(est.len(), draws, seed);
    let r = intersection_test_levels(&est, &se, n, &[alpha], &sim)
        .map_err(|e| e.to_string())?
        .remove(0);
    Ok(TestView {
        alpha: r.alpha,
        k0: r.k0,
        k: r.k,
        selected: r.selected.iter().map(|j| j + 1).collect(),
        statistic: r.statistic,
        rejected: r.rejected,
        ci: r.ci,
        ci_clamped: r.ci_clamped,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => {
            serde_json::to_string(&v).unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() }).to_string())
        }
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn explore_quad(p: f64, q: f64, rho: f64) -> String {
    to_json(quad_view(p, q, rho))
}

#[wasm_bindgen]
pub fn critical_values(n: u32, max_groups: u32, draws: u32, seed: u32) -> String {
    to_json(critical_curve(
        n as usize,
        max_groups as usize,
        draws as usize,
        seed as u64,
    ))
}

#[wasm_bindgen]
pub fn intersection_test(estimates: &str, ses: &str, n: u32, alpha: f64, draws: u32, seed: u32) -> String {
    to_json(run_test(estimates, ses, n as usize, alpha, draws as usize, seed as u64))
}
