//! Fully connected feed-forward networks with softmax output, trained on
//! mini-batches by SGD (Nesterov momentum) or Adam.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::knn::argmax;
use crate::dataset::LabeledVectors;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Logistic,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Logistic => math::sigmoid(z),
            Activation::Tanh => math::tanh(z),
        }
    }

    /// Derivative expressed through the activation value `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRate {
    Constant,
    /// lr / sqrt(epoch)
    InvScaling,
    /// Halve after 2 epochs without improvement.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub solver: Solver,
    pub learning_rate: LearningRate,
    /// Upper bound on training epochs.
    pub max_iter: usize,
    pub seed: u64,
    pub learning_rate_init: f64,
    /// L2 penalty.
    pub alpha: f64,
    /// `None` uses min(200, n).
    pub batch_size: Option<usize>,
    pub momentum: f64,
    pub tol: f64,
    /// Stagnant epochs tolerated before stopping under constant/invscaling.
    pub n_iter_no_change: usize,
    /// Permit an empty hidden layer list (a single-layer perceptron).
    pub single_layer: bool,
}

pub const ADAPTIVE_PATIENCE: usize = 2;
pub const MIN_ADAPTIVE_LR: f64 = 1e-6;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layer_sizes: vec![30, 30, 30],
            activation: Activation::Relu,
            solver: Solver::Adam,
            learning_rate: LearningRate::Constant,
            max_iter: 10_000,
            seed: 0,
            learning_rate_init: 0.001,
            alpha: 1e-4,
            batch_size: None,
            momentum: 0.9,
            tol: 1e-4,
            n_iter_no_change: 10,
            single_layer: false,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layer_sizes.is_empty() != self.single_layer {
            return Err(Error::BadArgument(
                "hidden layers must be non-empty unless the single-layer flag is set (and empty then)".into(),
            ));
        }
        if self.hidden_layer_sizes.contains(&0) {
            return Err(Error::BadArgument("hidden layers need at least one unit".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::BadArgument("max_iter must be at least 1".into()));
        }
        if !(self.learning_rate_init > 0.0) || self.alpha < 0.0 || self.batch_size == Some(0) {
            return Err(Error::BadArgument("invalid learning rate, penalty or batch size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// inputs x outputs, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform initialization.
    pub fn init(dims: &[usize], config: MlpConfig) -> Self {
        let mut rng = rng_from_seed(derive_seed(config.seed, "mlp-init"));
        let gain = if config.activation == Activation::Logistic { 2.0 } else { 6.0 };
        let layers = dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let bound = math::sqrt(gain / (i + o) as f64);
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: (0..o).map(|_| rng.random_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Self { config, layers, loss_curve: Vec::new() }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&p[off..off + w]);
            l.bias.copy_from_slice(&p[off + w..off + w + b]);
            off += w + b;
        }
    }

    /// Activations of every layer; the last entry is the softmax output.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let mut z = l.bias.clone();
            for (i, &a) in input.iter().enumerate() {
                if a != 0.0 {
                    let row = &l.weights[i * l.outputs..(i + 1) * l.outputs];
                    for (zj, &w) in z.iter_mut().zip(row) {
                        *zj += a * w;
                    }
                }
            }
            if li == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = self.config.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pop().unwrap_or_default()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.layers[0].inputs {
            return Err(Error::BadArgument("query dimension differs from training data".into()));
        }
        Ok(argmax(&self.predict_proba(x)))
    }

    /// Mean cross-entropy plus `alpha / (2 n) * |W|^2` over the batch, and its
    /// gradient in `flat_params` order.
    pub fn loss_and_gradient(&self, x: &[&[f64]], y: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |off, l| {
                let start = *off;
                *off += l.weights.len() + l.bias.len();
                Some(start)
            })
            .collect();
        let mut loss = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let acts = self.forward(xi);
            let out = &acts[acts.len() - 1];
            loss -= math::ln(out[yi].max(1e-300));
            let mut delta: Vec<f64> = out.clone();
            delta[yi] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let off = offsets[li];
                for (i, &a) in input.iter().enumerate() {
                    if a != 0.0 {
                        let g = &mut grad[off + i * l.outputs..off + (i + 1) * l.outputs];
                        for (gj, &d) in g.iter_mut().zip(&delta) {
                            *gj += a * d;
                        }
                    }
                }
                let gb = &mut grad[off + l.weights.len()..off + l.weights.len() + l.outputs];
                for (gj, &d) in gb.iter_mut().zip(&delta) {
                    *gj += d;
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (i, p) in prev.iter_mut().enumerate() {
                        let row = &l.weights[i * l.outputs..(i + 1) * l.outputs];
                        *p = math::dot(row, &delta) * self.config.activation.derivative(input[i]);
                    }
                    delta = prev;
                }
            }
        }
        let n = x.len() as f64;
        let mut sq = 0.0;
        for (l, &off) in self.layers.iter().zip(&offsets) {
            for (g, &w) in grad[off..off + l.weights.len()].iter_mut().zip(&l.weights) {
                *g += self.config.alpha * w;
                sq += w * w;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n + self.config.alpha * sq / (2.0 * n), grad)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = math::exp(*v - max);
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

enum Optimizer {
    Sgd { velocity: Vec<f64>, momentum: f64 },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd { velocity, momentum } => {
                for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
                    *v = *momentum * *v - lr * g;
                    *p += *momentum * *v - lr * g;
                }
            }
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let lr_t = lr * math::sqrt(1.0 - libm::pow(BETA2, *t as f64)) / (1.0 - libm::pow(BETA1, *t as f64));
                for (((p, mi), vi), &g) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grad) {
                    *mi = BETA1 * *mi + (1.0 - BETA1) * g;
                    *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
                    *p -= lr_t * *mi / (math::sqrt(*vi) + ADAM_EPS);
                }
            }
        }
    }
}

pub fn mlp_train(train: &LabeledVectors, config: MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::NotFitted);
    }
    let mut dims = vec![train.dim()];
    dims.extend(&config.hidden_layer_sizes);
    dims.push(train.n_classes());
    let mut model = MlpModel::init(&dims, config.clone());
    let n = train.len();
    let batch = config.batch_size.unwrap_or(200).min(n);
    let mut params = model.flat_params();
    let mut opt = match config.solver {
        Solver::Sgd => Optimizer::Sgd { velocity: vec![0.0; params.len()], momentum: config.momentum },
        Solver::Adam => Optimizer::Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 },
    };
    let mut rng = rng_from_seed(derive_seed(config.seed, "mlp-shuffle"));
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stagnant = 0;
    let mut lr = config.learning_rate_init;
    for epoch in 1..=config.max_iter {
        if config.learning_rate == LearningRate::InvScaling {
            lr = config.learning_rate_init / math::sqrt(epoch as f64);
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train.features[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ys);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(alloc::format!("loss became {loss} in epoch {epoch}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(&mut params, &grad, lr);
            model.set_flat_params(&params);
        }
        epoch_loss /= n as f64;
        model.loss_curve.push(epoch_loss);
        if epoch_loss > best - config.tol {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        best = best.min(epoch_loss);
        match config.learning_rate {
            LearningRate::Adaptive => {
                if stagnant >= ADAPTIVE_PATIENCE {
                    lr /= 2.0;
                    stagnant = 0;
                    if lr < MIN_ADAPTIVE_LR {
                        break;
                    }
                }
            }
            _ => {
                if stagnant >= config.n_iter_no_change {
                    break;
                }
            }
        }
    }
    Ok(model)
}

pub fn mlp_predict(model: &MlpModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn xor() -> LabeledVectors {
        LabeledVectors::new(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0, 0, 1, 1],
            vec!["even".to_string(), "odd".to_string()],
        )
        .unwrap()
    }

    fn train_accuracy(model: &MlpModel, d: &LabeledVectors) -> f64 {
        let ok = d.features.iter().zip(&d.labels).filter(|(x, &y)| model.predict(x).unwrap() == y).count();
        ok as f64 / d.len() as f64
    }

    #[test]
    fn deep_net_learns_xor() {
        let cfg = MlpConfig { hidden_layer_sizes: vec![10, 10, 10], learning_rate_init: 0.01, ..Default::default() };
        let model = mlp_train(&xor(), cfg).unwrap();
        assert_eq!(train_accuracy(&model, &xor()), 1.0);
    }

    #[test]
    fn perceptron_cannot_learn_xor() {
        let cfg = MlpConfig { hidden_layer_sizes: vec![], single_layer: true, ..Default::default() };
        let model = mlp_train(&xor(), cfg).unwrap();
        assert!(train_accuracy(&model, &xor()) <= 0.75);
    }

    #[test]
    fn softmax_sums_to_one() {
        let model = MlpModel::init(&[3, 4, 5], MlpConfig::default());
        let p = model.predict_proba(&[10.0, -3.0, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_hidden_list_needs_flag() {
        let cfg = MlpConfig { hidden_layer_sizes: vec![], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
