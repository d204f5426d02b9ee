//! Word2Vec over integer-coded sequences: windowed pair generation,
//! frequent-token subsampling, and shallow-network training with negative
//! sampling (skip-gram by default, CBOW on request).

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, weighted::WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSource, EmbeddingVector};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{rng_from_seed, Rng};

/// Exponent applied to unigram counts for the negative-sampling distribution.
pub const NEGATIVE_POWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub center: usize,
    pub context: usize,
}

/// (center, neighbor) for every neighbor within `window` positions, left to right.
pub fn build_pairs(codes: &[usize], window: usize) -> Vec<TrainingPair> {
    let mut pairs = Vec::with_capacity(codes.len() * 2 * window);
    for (t, &center) in codes.iter().enumerate() {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(codes.len().saturating_sub(1));
        for (u, &context) in codes.iter().enumerate().take(hi + 1).skip(lo) {
            if u != t {
                pairs.push(TrainingPair { center, context });
            }
        }
    }
    pairs
}

/// Probability of dropping one occurrence of a word with corpus frequency `freq`.
pub fn drop_probability(freq: f64, threshold: f64) -> f64 {
    if freq <= 0.0 {
        return 0.0;
    }
    (1.0 - math::sqrt(threshold / freq)).max(0.0)
}

/// Independently drops each occurrence of word `w` with probability
/// `max(0, 1 - sqrt(t / f(w)))`, `f(w)` being its frequency over all `seqs`.
pub fn subsample(seqs: &[Vec<usize>], m: usize, threshold: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(threshold > 0.0) {
        return Err(Error::BadArgument("subsampling threshold must be positive".into()));
    }
    let mut counts = vec![0u64; m];
    for s in seqs {
        for &c in s {
            if c >= m {
                return Err(Error::BadArgument(alloc::format!("code {c} outside M={m}")));
            }
            counts[c] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let drop: Vec<f64> = counts
        .iter()
        .map(|&c| drop_probability(c as f64 / total.max(1) as f64, threshold))
        .collect();
    let mut rng = rng_from_seed(seed);
    Ok(seqs
        .iter()
        .map(|s| s.iter().copied().filter(|&c| drop[c] == 0.0 || rng.random::<f64>() >= drop[c]).collect())
        .collect())
}

/// Noise distribution for negatives: counts raised to 3/4, normalized.
pub fn negative_distribution(counts: &[u64]) -> Vec<f64> {
    let weights: Vec<f64> = counts.iter().map(|&c| math::powf(c as f64, NEGATIVE_POWER)).collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    weights.iter().map(|w| w / total).collect()
}

struct NoiseSampler {
    alias: WeightedAliasIndex<f64>,
}

impl NoiseSampler {
    fn new(counts: &[u64]) -> Result<Self> {
        let alias = WeightedAliasIndex::new(negative_distribution(counts))
            .map_err(|e| Error::BadArgument(alloc::format!("noise distribution: {e}")))?;
        Ok(Self { alias })
    }

    fn draw(&self, rng: &mut Rng) -> usize {
        self.alias.sample(rng)
    }
}

/// Running `-sum ln p` over many probabilities, taking a logarithm only when
/// the accumulated product nears underflow.
#[derive(Debug, Clone, Copy)]
struct LogLoss {
    product: f64,
    folded: f64,
}

impl LogLoss {
    const NEW: Self = Self { product: 1.0, folded: 0.0 };

    #[inline(always)]
    fn push(&mut self, p: f64) {
        self.product *= p.max(f64::MIN_POSITIVE);
        if self.product < 1e-250 {
            self.folded -= math::ln(self.product);
            self.product = 1.0;
        }
    }

    fn total(&self) -> f64 {
        self.folded - math::ln(self.product)
    }
}

/// Adds one target's contribution to `grad_h` and `loss`, returning its
/// coefficient `g`.
#[inline(always)]
fn accumulate(h: &[f64], u: &[f64], positive: bool, grad_h: &mut [f64], loss: &mut LogLoss) -> f64 {
    let score = math::dot(h, u);
    let z = math::exp(-score.abs());
    let inv = 1.0 / (1.0 + z);
    let (sig, rest) = if score >= 0.0 { (inv, z * inv) } else { (z * inv, inv) };
    let (g, p) = if positive { (-rest, sig) } else { (sig, rest) };
    loss.push(p);
    for (gh, &ui) in grad_h.iter_mut().zip(u) {
        *gh += g * ui;
    }
    g
}

/// Loss and gradient of the negative-sampling objective for one hidden vector.
///
/// `targets` holds (output vector, label) pairs: label `true` for the observed
/// word, `false` for sampled negatives. The loss is
/// `-sum log sigmoid(s_k * h.u_k)` with `s_k = +1` for positives and `-1` for
/// negatives. On return `grad_h` holds dL/dh and `coeffs[k]` the scalar `g_k`
/// with dL/du_k = g_k * h.
pub fn negative_sampling_gradient(
    h: &[f64],
    targets: &[(&[f64], bool)],
    grad_h: &mut [f64],
    coeffs: &mut Vec<f64>,
) -> f64 {
    grad_h.iter_mut().for_each(|g| *g = 0.0);
    coeffs.clear();
    let mut loss = LogLoss::NEW;
    for &(u, positive) in targets {
        coeffs.push(accumulate(h, u, positive, grad_h, &mut loss));
    }
    loss.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// The center word predicts each context word.
    SkipGram,
    /// The averaged context predicts the center word.
    Cbow,
}

/// Which weight matrix supplies the word vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSide {
    /// Hidden-to-output weights feeding each word's output node.
    Output,
    /// Input-to-hidden weights of each word's one-hot input.
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Frequent-token subsampling threshold; `None` disables it.
    pub subsample: Option<f64>,
    pub architecture: Architecture,
    pub side: EmbeddingSide,
    pub seed: u64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            window: 10,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
            subsample: None,
            architecture: Architecture::SkipGram,
            side: EmbeddingSide::Output,
            seed: 0,
        }
    }
}

impl Word2VecConfig {
    /// Settings for per-sample opcode embeddings: CBOW, window 10, two
    /// dimensions per opcode.
    pub fn opcode_default() -> Self {
        Self { architecture: Architecture::Cbow, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.negatives == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::BadArgument("dim, window, negatives and epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word2VecModel {
    pub m: usize,
    pub dim: usize,
    /// M x dim, row `w` is word `w`'s input vector.
    pub input: Vec<f64>,
    /// M x dim, row `w` is the weights into output node `w`
    /// (the transpose of the usual dim x M output layer).
    pub output: Vec<f64>,
    pub config: Word2VecConfig,
    /// Mean per-update loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl Word2VecModel {
    pub fn new(m: usize, config: Word2VecConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let mut rng = rng_from_seed(config.seed);
        let bound = 0.5 / dim as f64;
        let input = (0..m * dim).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self { m, dim, input, output: vec![0.0; m * dim], config, epoch_losses: Vec::new() })
    }

    pub fn input_vector(&self, w: usize) -> &[f64] {
        &self.input[w * self.dim..(w + 1) * self.dim]
    }

    pub fn output_vector(&self, w: usize) -> &[f64] {
        &self.output[w * self.dim..(w + 1) * self.dim]
    }

    pub fn vector(&self, w: usize, side: EmbeddingSide) -> &[f64] {
        match side {
            EmbeddingSide::Output => self.output_vector(w),
            EmbeddingSide::Input => self.input_vector(w),
        }
    }
}

fn learning_rate(config: &Word2VecConfig, step: usize, total: usize) -> f64 {
    let progress = step as f64 / total.max(1) as f64;
    config.lr_start - (config.lr_start - config.lr_end) * progress
}

/// Applies one negative-sampling SGD update around hidden vector `h`, adding
/// its pre-update loss to `loss` and leaving dL/dh in `grad_h`.
fn sgd_update(
    output: &mut [f64],
    dim: usize,
    h: &[f64],
    target: usize,
    negatives: &[usize],
    lr: f64,
    grad_h: &mut [f64],
    coeffs: &mut Vec<f64>,
    loss: &mut LogLoss,
) {
    grad_h.iter_mut().for_each(|g| *g = 0.0);
    coeffs.clear();
    let words = || core::iter::once(target).chain(negatives.iter().copied());
    for w in words() {
        let u = &output[w * dim..(w + 1) * dim];
        coeffs.push(accumulate(h, u, w == target, grad_h, loss));
    }
    for (w, &g) in words().zip(coeffs.iter()) {
        for (u, &hi) in output[w * dim..(w + 1) * dim].iter_mut().zip(h) {
            *u -= lr * g * hi;
        }
    }
}

fn draw_negatives(sampler: &NoiseSampler, k: usize, exclude: usize, rng: &mut Rng, out: &mut Vec<usize>) {
    out.clear();
    for _ in 0..k {
        let w = sampler.draw(rng);
        if w != exclude {
            out.push(w);
        }
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(alloc::format!("loss became {loss} in epoch {}", epoch + 1)));
    }
    Ok(())
}

/// Skip-gram training on pre-built pairs. Negatives are drawn from the
/// context-word counts raised to 3/4.
pub fn train(pairs: &[TrainingPair], m: usize, config: &Word2VecConfig) -> Result<Word2VecModel> {
    if pairs.is_empty() {
        return Err(Error::BadArgument("no training pairs".into()));
    }
    if pairs.iter().any(|p| p.center >= m || p.context >= m) {
        return Err(Error::BadArgument(alloc::format!("pair index outside M={m}")));
    }
    let mut model = Word2VecModel::new(m, *config)?;
    let dim = model.dim;
    let mut counts = vec![0u64; m];
    for p in pairs {
        counts[p.context] += 1;
    }
    let sampler = NoiseSampler::new(&counts)?;
    let mut rng = rng_from_seed(crate::rng::derive_seed(config.seed, "sgd"));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let total = pairs.len() * config.epochs;
    let mut step = 0;
    let mut grad_h = vec![0.0; dim];
    let mut coeffs = Vec::new();
    let mut negs = Vec::with_capacity(config.negatives);
    let mut h = vec![0.0; dim];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LogLoss::NEW;
        for &idx in &order {
            let pair = pairs[idx];
            let lr = learning_rate(config, step, total);
            step += 1;
            draw_negatives(&sampler, config.negatives, pair.context, &mut rng, &mut negs);
            h.copy_from_slice(model.input_vector(pair.center));
            sgd_update(&mut model.output, dim, &h, pair.context, &negs, lr, &mut grad_h, &mut coeffs, &mut epoch_loss);
            for (w, g) in model.input[pair.center * dim..(pair.center + 1) * dim].iter_mut().zip(&grad_h) {
                *w -= lr * g;
            }
        }
        let mean = epoch_loss.total() / pairs.len() as f64;
        check_loss(mean, epoch)?;
        model.epoch_losses.push(mean);
    }
    Ok(model)
}

/// CBOW training: the mean of the input vectors within `window` of each
/// position predicts the word at that position.
pub fn train_cbow(seqs: &[Vec<usize>], m: usize, config: &Word2VecConfig) -> Result<Word2VecModel> {
    let mut model = Word2VecModel::new(m, *config)?;
    let dim = model.dim;
    let window = config.window;
    let mut counts = vec![0u64; m];
    let mut positions = Vec::new();
    for (s, seq) in seqs.iter().enumerate() {
        for (t, &c) in seq.iter().enumerate() {
            if c >= m {
                return Err(Error::BadArgument(alloc::format!("code {c} outside M={m}")));
            }
            counts[c] += 1;
            if seq.len() > 1 {
                positions.push((s, t));
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::BadArgument("no position has any context".into()));
    }
    let sampler = NoiseSampler::new(&counts)?;
    let mut rng = rng_from_seed(crate::rng::derive_seed(config.seed, "sgd"));
    let total = positions.len() * config.epochs;
    let mut step = 0;
    let mut grad_h = vec![0.0; dim];
    let mut coeffs = Vec::new();
    let mut negs = Vec::with_capacity(config.negatives);
    let mut h = vec![0.0; dim];
    for epoch in 0..config.epochs {
        positions.shuffle(&mut rng);
        let mut epoch_loss = LogLoss::NEW;
        for &(s, t) in &positions {
            let seq = &seqs[s];
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(seq.len() - 1);
            let context = || (lo..=hi).filter(move |&u| u != t).map(|u| seq[u]);
            let n_ctx = (hi - lo) as f64;
            h.iter_mut().for_each(|v| *v = 0.0);
            for w in context() {
                for (hv, &x) in h.iter_mut().zip(model.input_vector(w)) {
                    *hv += x / n_ctx;
                }
            }
            let lr = learning_rate(config, step, total);
            step += 1;
            let center = seq[t];
            draw_negatives(&sampler, config.negatives, center, &mut rng, &mut negs);
            sgd_update(&mut model.output, dim, &h, center, &negs, lr, &mut grad_h, &mut coeffs, &mut epoch_loss);
            for w in context() {
                for (x, g) in model.input[w * dim..(w + 1) * dim].iter_mut().zip(&grad_h) {
                    *x -= lr * g;
                }
            }
        }
        let mean = epoch_loss.total() / positions.len() as f64;
        check_loss(mean, epoch)?;
        model.epoch_losses.push(mean);
    }
    Ok(model)
}

/// Subsamples (if configured), then trains with the configured architecture.
pub fn train_sequences(seqs: &[Vec<usize>], m: usize, config: &Word2VecConfig) -> Result<Word2VecModel> {
    let owned;
    let seqs = match config.subsample {
        Some(t) => {
            owned = subsample(seqs, m, t, crate::rng::derive_seed(config.seed, "subsample"))?;
            &owned[..]
        }
        None => seqs,
    };
    match config.architecture {
        Architecture::SkipGram => {
            let pairs: Vec<TrainingPair> = seqs.iter().flat_map(|s| build_pairs(s, config.window)).collect();
            train(&pairs, m, config)
        }
        Architecture::Cbow => train_cbow(seqs, m, config),
    }
}

/// Per-word vectors from the configured side, concatenated in code order.
pub fn extract(model: &Word2VecModel, vocab_len: usize) -> Result<EmbeddingVector> {
    if vocab_len != model.m {
        return Err(Error::BadArgument(alloc::format!(
            "model has {} words, vocabulary has {vocab_len}",
            model.m
        )));
    }
    let side = model.config.side;
    let values = (0..model.m).flat_map(|w| model.vector(w, side).iter().copied()).collect();
    Ok(EmbeddingVector::new(values, EmbeddingSource::Word2Vec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_respect_bounds() {
        assert!(build_pairs(&[3], 2).is_empty());
        let p = build_pairs(&[0, 1, 2], 1);
        let flat: Vec<(usize, usize)> = p.iter().map(|p| (p.center, p.context)).collect();
        assert_eq!(flat, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn drop_probability_formula() {
        assert_eq!(drop_probability(0.001, 0.001), 0.0);
        assert_eq!(drop_probability(0.0005, 0.001), 0.0);
        assert!((drop_probability(0.004, 0.001) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn huge_threshold_keeps_everything() {
        let seqs = vec![vec![0, 0, 0, 1], vec![1, 0]];
        assert_eq!(subsample(&seqs, 2, 1e9, 1).unwrap(), seqs);
        assert!(subsample(&seqs, 2, 0.0, 1).is_err());
    }

    #[test]
    fn noise_distribution_monotone() {
        let d = negative_distribution(&[1, 10, 100, 0]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d[2] > d[1] && d[1] > d[0] && d[0] > d[3]);
    }

    #[test]
    fn untrained_output_side_is_degenerate() {
        let model = Word2VecModel::new(4, Word2VecConfig::default()).unwrap();
        let e = extract(&model, 4).unwrap();
        assert_eq!(e.len(), 8);
        assert!(e.is_degenerate());
        assert!(extract(&model, 5).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let codes: Vec<usize> = (0..300).map(|i| (i * i + 3 * i) % 6).collect();
        let cfg = Word2VecConfig { window: 2, ..Word2VecConfig::default() };
        let a = train_sequences(core::slice::from_ref(&codes), 6, &cfg).unwrap();
        let b = train_sequences(&[codes], 6, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch_losses.len(), 5);
    }

    #[test]
    fn cbow_trains_and_reports_losses() {
        let codes: Vec<usize> = (0..400).map(|i| [0, 1, 2, 3][i % 4]).collect();
        let cfg = Word2VecConfig { architecture: Architecture::Cbow, window: 2, epochs: 10, ..Default::default() };
        let model = train_sequences(&[codes], 4, &cfg).unwrap();
        assert!(model.epoch_losses.iter().all(|l| l.is_finite()));
        assert!(model.epoch_losses[9] < model.epoch_losses[0]);
    }
}
