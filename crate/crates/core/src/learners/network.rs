//! Feedforward network over dummy-coded inputs, trained with Adam on a
//! sample-weighted loss, inverted dropout on hidden units, and early
//! stopping on a validation set.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

use super::{EpochRecord, TrainingReport, PROB_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Number of hidden layers; 0 means a softmax directly on the inputs.
    pub depth: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            depth: 0,
            width: 8,
            dropout: 0.0,
            patience: 10,
            max_epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn new(depth: usize, width: usize, dropout: f64) -> Self {
        NetworkConfig {
            depth,
            width,
            dropout,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("network: {m}")));
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("bad optimizer settings");
        }
        Ok(())
    }
}

/// Output layer semantics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// Softmax over `classes` outcomes, cross-entropy loss.
    Softmax { classes: usize },
    /// Two logits: probability of the mass point `w = 1`, and the mean of a
    /// Beta law with fixed dispersion for `w < 1`.
    WeightMixture { dispersion: f64 },
}

impl Head {
    pub fn outputs(&self) -> usize {
        match self {
            Head::Softmax { classes } => *classes,
            Head::WeightMixture { .. } => 2,
        }
    }
}

/// Training targets, one per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

/// Sparse 0/1 inputs (active column indices), labels and loss weights.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<usize>>,
    pub labels: Labels,
    pub weights: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: Option<usize>,
}

/// Weights are stored input-major (`[in][out]`) in one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    n_inputs: usize,
    head: Head,
    dropout: f64,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Exact number of trainable scalars: the first layer has no bias because
/// the inputs carry a constant column; every later layer has one.
pub fn count_parameters(cfg: &NetworkConfig, n_inputs: usize, outputs: usize) -> usize {
    layer_shapes(cfg.depth, cfg.width, n_inputs, outputs).1
}

/// `n_X·W + (D−1)·W² + 3W` for `D > 0` and `3·n_X` for `D = 0`, the count
/// that treats the four-way softmax as three free logits without output
/// biases.
pub fn nominal_parameter_count(cfg: &NetworkConfig, n_inputs: usize) -> usize {
    if cfg.depth == 0 {
        3 * n_inputs
    } else {
        n_inputs * cfg.width + (cfg.depth - 1) * cfg.width * cfg.width + 3 * cfg.width
    }
}

fn layer_shapes(depth: usize, width: usize, n_inputs: usize, outputs: usize) -> (Vec<LayerShape>, usize) {
    let mut dims = vec![n_inputs];
    dims.extend(std::iter::repeat_n(width, depth));
    dims.push(outputs);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    for (l, pair) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let w_off = off;
        off += n_in * n_out;
        let b_off = if l == 0 {
            None
        } else {
            let b = off;
            off += n_out;
            Some(b)
        };
        layers.push(LayerShape {
            n_in,
            n_out,
            w_off,
            b_off,
        });
    }
    (layers, off)
}

/// Per-row scratch buffers.
struct Scratch {
    acts: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(cfg: &NetworkConfig, n_inputs: usize, head: Head) -> Self {
        let (layers, total) = layer_shapes(cfg.depth, cfg.width, n_inputs, head.outputs());
        let mut params = vec![0.0; total];
        let mut rng = rng::stream(cfg.seed, tags::INIT, 0);
        for l in &layers {
            let limit = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for p in &mut params[l.w_off..l.w_off + l.n_in * l.n_out] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Network {
            n_inputs,
            head,
            dropout: cfg.dropout,
            layers,
            params,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Sizes of every weight and bias tensor, in storage order.
    pub fn tensor_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.n_in * l.n_out);
            if l.b_off.is_some() {
                out.push(l.n_out);
            }
        }
        out
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            acts: self.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            masks: self.layers.iter().map(|l| vec![1.0; l.n_out]).collect(),
            deltas: self.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
        }
    }

    /// Forward pass; `acts[last]` holds the output logits. Hidden units get
    /// ReLU and, when `rng` is given, inverted dropout.
    fn forward(&self, input: &[usize], s: &mut Scratch, mut rng: Option<&mut rng::Rng>) {
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.dropout;
        for (li, l) in self.layers.iter().enumerate() {
            let (before, rest) = s.acts.split_at_mut(li);
            let out = &mut rest[0];
            match l.b_off {
                Some(b) => out.copy_from_slice(&self.params[b..b + l.n_out]),
                None => out.iter_mut().for_each(|v| *v = 0.0),
            }
            if li == 0 {
                for &j in input {
                    let row = &self.params[l.w_off + j * l.n_out..l.w_off + (j + 1) * l.n_out];
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += w;
                    }
                }
            } else {
                let prev = &before[li - 1];
                for (j, &a) in prev.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let row = &self.params[l.w_off + j * l.n_out..l.w_off + (j + 1) * l.n_out];
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += a * w;
                    }
                }
            }
            if li < last {
                let mask = &mut s.masks[li];
                for (o, m) in out.iter_mut().zip(mask.iter_mut()) {
                    if *o < 0.0 {
                        *o = 0.0;
                    }
                    *m = 1.0;
                    if let Some(r) = rng.as_deref_mut() {
                        if self.dropout > 0.0 {
                            *m = if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                        }
                    }
                    *o *= *m;
                }
            }
        }
    }

    /// Loss of one row and `dℓ/d(logits)`, from the output logits.
    fn head_loss(&self, logits: &[f64], labels: &Labels, i: usize, grad: &mut [f64]) -> f64 {
        match (self.head, labels) {
            (Head::Softmax { .. }, Labels::Classes(y)) => {
                softmax_into(logits, grad);
                let loss = -grad[y[i]].max(PROB_FLOOR).ln();
                grad[y[i]] -= 1.0;
                loss
            }
            (Head::WeightMixture { dispersion }, Labels::Values(v)) => {
                mixture_loss(logits[0], logits[1], v[i], dispersion, grad)
            }
            _ => panic!("labels do not match the network head"),
        }
    }

    /// Output transform: class probabilities, or `(π, m)` for the mixture head.
    pub fn predict(&self, input: &[usize]) -> Vec<f64> {
        let mut s = self.scratch();
        self.forward(input, &mut s, None);
        let logits = s.acts.last().expect("output layer");
        let mut out = vec![0.0; logits.len()];
        match self.head {
            Head::Softmax { .. } => softmax_into(logits, &mut out),
            Head::WeightMixture { .. } => {
                out[0] = sigmoid(logits[0]);
                out[1] = sigmoid(logits[1]);
            }
        }
        out
    }

    /// Weighted mean loss without dropout.
    pub fn loss(&self, data: &TrainingSet) -> f64 {
        let mut s = self.scratch();
        let mut grad = vec![0.0; self.head.outputs()];
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..data.len() {
            self.forward(&data.inputs[i], &mut s, None);
            let l = self.head_loss(s.acts.last().unwrap(), &data.labels, i, &mut grad);
            num += data.weights[i] * l;
            den += data.weights[i];
        }
        num / den
    }

    /// Weighted mean loss over `rows` and its gradient in the parameters,
    /// with dropout drawn from `rng` when given.
    fn accumulate(
        &self,
        data: &TrainingSet,
        rows: &[usize],
        s: &mut Scratch,
        grad: &mut [f64],
        mut rng: Option<&mut rng::Rng>,
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let total: f64 = rows.iter().map(|&i| data.weights[i]).sum();
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; self.head.outputs()];
        for &i in rows {
            self.forward(&data.inputs[i], s, rng.as_deref_mut());
            let scale = data.weights[i] / total;
            loss += scale * self.head_loss(&s.acts[last], &data.labels, i, &mut out_grad);
            for (d, g) in s.deltas[last].iter_mut().zip(&out_grad) {
                *d = g * scale;
            }
            for li in (0..=last).rev() {
                let l = self.layers[li];
                if let Some(b) = l.b_off {
                    for (g, d) in grad[b..b + l.n_out].iter_mut().zip(&s.deltas[li]) {
                        *g += d;
                    }
                }
                if li == 0 {
                    for &j in &data.inputs[i] {
                        let gw = &mut grad[l.w_off + j * l.n_out..l.w_off + (j + 1) * l.n_out];
                        for (g, d) in gw.iter_mut().zip(&s.deltas[0]) {
                            *g += d;
                        }
                    }
                    break;
                }
                let (lower, upper) = s.deltas.split_at_mut(li);
                let delta = &upper[0];
                let prev_delta = &mut lower[li - 1];
                let prev_act = &s.acts[li - 1];
                let prev_mask = &s.masks[li - 1];
                for j in 0..l.n_in {
                    let row = l.w_off + j * l.n_out;
                    let a = prev_act[j];
                    if a != 0.0 {
                        for (g, d) in grad[row..row + l.n_out].iter_mut().zip(delta) {
                            *g += a * d;
                        }
                    }
                    // ReLU and dropout gate: the unit passed iff its output is nonzero
                    prev_delta[j] = if a > 0.0 {
                        let back: f64 = self.params[row..row + l.n_out]
                            .iter()
                            .zip(delta)
                            .map(|(w, d)| w * d)
                            .sum();
                        back * prev_mask[j]
                    } else {
                        0.0
                    };
                }
            }
        }
        loss
    }

    /// Loss and analytic gradient over all rows, without dropout.
    pub fn loss_and_gradient(&self, data: &TrainingSet) -> (f64, Vec<f64>) {
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut s = self.scratch();
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(data, &rows, &mut s, &mut grad, None);
        (loss, grad)
    }
}

fn sigmoid(z: f64) -> f64 {
    crate::synth::logistic(z)
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

const MEAN_CLAMP: f64 = 1e-9;

/// Negative log-likelihood of `w` under the mass-point/Beta mixture with
/// logits `(a, b)`; writes `(dℓ/da, dℓ/db)` to `grad`.
fn mixture_loss(a: f64, b: f64, w: f64, dispersion: f64, grad: &mut [f64]) -> f64 {
    let pi = sigmoid(a);
    if w >= 1.0 {
        grad[0] = pi - 1.0;
        grad[1] = 0.0;
        return -pi.max(PROB_FLOOR).ln();
    }
    let m = sigmoid(b).clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP);
    let (alpha, beta) = (m * dispersion, (1.0 - m) * dispersion);
    let log_density = (alpha - 1.0) * w.ln() + (beta - 1.0) * (1.0 - w).ln()
        - (ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(dispersion));
    grad[0] = pi;
    grad[1] = -dispersion * (w.ln() - (1.0 - w).ln() - digamma(alpha) + digamma(beta)) * m * (1.0 - m);
    -(1.0 - pi).max(PROB_FLOOR).ln() - log_density
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &NetworkConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Trains until the validation loss has not improved for `patience` epochs
/// (or `max_epochs`), then restores the parameters of the best epoch.
pub fn fit(
    cfg: &NetworkConfig,
    head: Head,
    n_inputs: usize,
    train: &TrainingSet,
    validation: &TrainingSet,
) -> Result<(Network, TrainingReport)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Invalid("training and validation sets must be nonempty".into()));
    }
    let mut net = Network::new(cfg, n_inputs, head);
    let mut adam = Adam::new(net.params.len());
    let mut s = net.scratch();
    let mut grad = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_params = net.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng::stream(cfg.seed, tags::SHUFFLE, epoch as u64));
        let mut drop_rng = rng::stream(cfg.seed, tags::DROPOUT, epoch as u64);
        let (mut num, mut den) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let bw: f64 = batch.iter().map(|&i| train.weights[i]).sum();
            let l = net.accumulate(train, batch, &mut s, &mut grad, Some(&mut drop_rng));
            num += l * bw;
            den += bw;
            adam.step(cfg, &mut net.params, &grad);
        }
        let train_loss = num / den;
        let validation_loss = net.loss(validation);
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best_params.copy_from_slice(&net.params);
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    net.params = best_params;
    Ok((
        net,
        TrainingReport {
            epochs,
            best_epoch,
            best_validation_loss: best_loss,
        },
    ))
}
