//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use pcp_core::data::{CategoricalSchema, Dataset, Feature};
use pcp_core::synth::{graded_coefficients, RhoMap, SyntheticDgp};

/// Two features (3 and 4 modalities, 12 cells) with a strong covariate
/// signal in both marginals.
pub fn two_feature_dgp(rho: RhoMap) -> SyntheticDgp {
    let schema = CategoricalSchema::new(vec![
        Feature::new("a", vec![1, 2, 3]),
        Feature::new("b", vec![1, 2, 3, 4]),
    ])
    .unwrap();
    let coef_p = graded_coefficients(&schema, -1.0, &[1.5, 1.0]);
    let coef_q = graded_coefficients(&schema, -1.2, &[-0.8, 1.2]);
    SyntheticDgp::new(schema, coef_p, coef_q, rho).unwrap()
}

/// Per-record covariance and correlation of the record's covariate cell,
/// by scanning every record for matching levels and forming weighted
/// moments `E[cr] − E[c]E[r]`.
pub fn brute_force_cell_moments(d: &Dataset) -> Vec<(f64, Option<f64>)> {
    let recs = d.records();
    recs.iter()
        .map(|a| {
            let (mut sw, mut sc, mut sr, mut scr) = (0.0, 0.0, 0.0, 0.0);
            for b in recs.iter().filter(|b| b.levels == a.levels) {
                let (c, r) = (f64::from(u8::from(b.c)), f64::from(u8::from(b.r)));
                sw += b.w;
                sc += b.w * c;
                sr += b.w * r;
                scr += b.w * c * r;
            }
            let (ec, er, ecr) = (sc / sw, sr / sw, scr / sw);
            let cov = ecr - ec * er;
            let var = ec * (1.0 - ec) * er * (1.0 - er);
            (cov, (var > 1e-18).then(|| cov / var.sqrt()))
        })
        .collect()
}

/// Weighted multinomial logit on dense rows, class 0 as reference, fitted by
/// Newton–Raphson (iteratively reweighted least squares) with step halving.
/// Returns `(K−1) × d` coefficients, class-major.
pub fn irls_multinomial_logit(x: &[Vec<f64>], y: &[usize], w: &[f64], classes: usize) -> Vec<f64> {
    let d = x[0].len();
    let m = (classes - 1) * d;
    let mut beta = vec![0.0; m];
    let mut loss = mlogit_loss(&beta, x, y, w, classes);
    for _ in 0..200 {
        let mut g = DVector::<f64>::zeros(m);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..x.len() {
            let p = mlogit_probs(&beta, &x[i], classes);
            for k in 1..classes {
                let resid = p[k] - f64::from(u8::from(y[i] == k));
                for a in 0..d {
                    g[(k - 1) * d + a] += w[i] * resid * x[i][a];
                }
                for l in 1..classes {
                    let c = w[i] * p[k] * (f64::from(u8::from(k == l)) - p[l]);
                    for a in 0..d {
                        for b in 0..d {
                            h[((k - 1) * d + a, (l - 1) * d + b)] += c * x[i][a] * x[i][b];
                        }
                    }
                }
            }
        }
        let step = h.cholesky().expect("positive definite Hessian").solve(&g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let l = mlogit_loss(&cand, x, y, w, classes);
            if l <= loss || t < 1e-8 {
                beta = cand;
                let done = (loss - l).abs() < 1e-15;
                loss = l;
                if done {
                    return beta;
                }
                break;
            }
            t /= 2.0;
        }
        if step.norm() * t < 1e-12 {
            break;
        }
    }
    beta
}

pub fn mlogit_probs(beta: &[f64], x: &[f64], classes: usize) -> Vec<f64> {
    let d = x.len();
    let mut z = vec![0.0; classes];
    for k in 1..classes {
        z[k] = (0..d).map(|a| beta[(k - 1) * d + a] * x[a]).sum();
    }
    let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Weighted mean negative log-likelihood.
pub fn mlogit_loss(beta: &[f64], x: &[Vec<f64>], y: &[usize], w: &[f64], classes: usize) -> f64 {
    let mut num = 0.0;
    for i in 0..x.len() {
        num -= w[i] * mlogit_probs(beta, &x[i], classes)[y[i]].ln();
    }
    num / w.iter().sum::<f64>()
}
