mod support;

use pcp_core::data::{split, Encoder, SplitPlan};
use pcp_core::functionals::{correlation_from_quad, covariance_from_quad, empirical_cell_quads};
use pcp_core::learners::network::{Head, Labels, Network, TrainingSet};
use pcp_core::learners::{cross_entropy_loss, train_network, NetworkConfig};
use pcp_core::synth::RhoMap;

use support::*;

#[test]
fn plug_in_functionals_match_brute_force_cell_moments() {
    for (seed, rho) in [(1, 0.0), (2, 0.2), (3, -0.15)] {
        let dgp = two_feature_dgp(RhoMap::Constant { value: rho });
        let (d, _) = dgp.sample_dataset(1500, seed).unwrap();
        let quads = empirical_cell_quads(&d);
        for (q, (cov, corr)) in quads.iter().zip(brute_force_cell_moments(&d)) {
            assert!((covariance_from_quad(q) - cov).abs() < 1e-12);
            match (correlation_from_quad(q), corr) {
                (Ok(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (Err(_), None) => {}
                (a, b) => panic!("degeneracy disagrees: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn softmax_without_hidden_layers_reaches_the_logit_optimum() {
    let dgp = two_feature_dgp(RhoMap::Constant { value: 0.1 });
    let (d, _) = dgp.sample_dataset(3000, 11).unwrap();
    let (train, validation, test) = split(&d, &SplitPlan::standard(5)).unwrap();
    let cfg = NetworkConfig {
        learning_rate: 0.01,
        patience: 30,
        seed: 9,
        ..NetworkConfig::new(0, 8, 0.0)
    };
    let net = train_network(&train, &validation, &cfg).unwrap();

    let enc = Encoder::new(d.schema());
    let dense = |ds: &pcp_core::data::Dataset| -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
        (
            ds.records().iter().map(|r| enc.encode(&r.levels)).collect(),
            ds.records().iter().map(|r| r.class()).collect(),
            ds.weights(),
        )
    };
    let (x, y, w) = dense(&train);
    let beta = irls_multinomial_logit(&x, &y, &w, 4);
    let (xt, yt, wt) = dense(&test);
    let oracle = mlogit_loss(&beta, &xt, &yt, &wt, 4);
    let learned = cross_entropy_loss(&net, &test).unwrap();
    assert!((learned - oracle).abs() < 2e-3, "network {learned} vs oracle {oracle}");
    // The oracle is the training-loss minimizer.
    let train_oracle = mlogit_loss(&beta, &x, &y, &w, 4);
    assert!(cross_entropy_loss(&net, &train).unwrap() >= train_oracle - 1e-9);
}

#[test]
fn backpropagation_matches_central_differences() {
    let cfg = NetworkConfig {
        seed: 4,
        ..NetworkConfig::new(1, 2, 0.0)
    };
    let mut net = Network::new(&cfg, 3, Head::Softmax { classes: 4 });
    assert!(net.params().len() <= 20);
    let data = TrainingSet {
        inputs: vec![vec![0], vec![0, 1], vec![0, 2], vec![0, 1, 2], vec![0, 2]],
        labels: Labels::Classes(vec![0, 3, 1, 2, 3]),
        weights: vec![1.0, 0.5, 0.8, 0.3, 1.0],
    };
    let (_, grad) = net.loss_and_gradient(&data);
    let h = 1e-6;
    for j in 0..grad.len() {
        let orig = net.params()[j];
        net.params_mut()[j] = orig + h;
        let up = net.loss(&data);
        net.params_mut()[j] = orig - h;
        let down = net.loss(&data);
        net.params_mut()[j] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-4, "parameter {j}: analytic {} numeric {fd}", grad[j]);
    }
}
