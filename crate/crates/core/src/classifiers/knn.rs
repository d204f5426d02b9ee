//! k-nearest-neighbor classification under a Minkowski metric.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledVectors;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeights {
    Uniform,
    /// Votes weighted by 1/d; neighbors at distance zero outvote all others.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub n_neighbors: usize,
    pub weights: KnnWeights,
    /// Minkowski order.
    pub p: u32,
}

impl KnnConfig {
    pub fn new(n_neighbors: usize, weights: KnnWeights, p: u32) -> Self {
        Self { n_neighbors, weights, p }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::BadArgument("n_neighbors must be at least 1".into()));
        }
        if self.p == 0 {
            return Err(Error::BadArgument("Minkowski order must be at least 1".into()));
        }
        Ok(())
    }
}

/// A kNN "model" is its stored training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub config: KnnConfig,
    pub train: LabeledVectors,
}

pub fn distance(a: &[f64], b: &[f64], p: u32) -> f64 {
    match p {
        1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        2 => math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
        _ => {
            let s: f64 = a.iter().zip(b).map(|(x, y)| libm::pow((x - y).abs(), p as f64)).sum();
            math::powf(s, 1.0 / p as f64)
        }
    }
}

pub fn knn_train(train: &LabeledVectors, config: KnnConfig) -> Result<KnnModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::NotFitted);
    }
    if config.n_neighbors > train.len() {
        return Err(Error::BadArgument(alloc::format!(
            "k={} exceeds training size {}",
            config.n_neighbors,
            train.len()
        )));
    }
    Ok(KnnModel { config, train: train.clone() })
}

/// Indices of the k nearest training points, nearest first, ties by index.
pub fn nearest(train: &LabeledVectors, x: &[f64], k: usize, p: u32) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> =
        train.features.iter().enumerate().map(|(i, f)| (i, distance(f, x, p))).collect();
    let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < d.len() {
        d.select_nth_unstable_by(k, by_distance);
        d.truncate(k);
    }
    d.sort_by(by_distance);
    d
}

/// Highest score wins; ties go to the lowest class index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

pub fn knn_predict(train: &LabeledVectors, config: &KnnConfig, x: &[f64]) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::NotFitted);
    }
    config.validate()?;
    if config.n_neighbors > train.len() {
        return Err(Error::BadArgument("k exceeds training size".into()));
    }
    if x.len() != train.dim() {
        return Err(Error::BadArgument("query dimension differs from training data".into()));
    }
    let neighbors = nearest(train, x, config.n_neighbors, config.p);
    let mut votes = vec![0.0; train.n_classes()];
    match config.weights {
        KnnWeights::Uniform => {
            for &(i, _) in &neighbors {
                votes[train.labels[i]] += 1.0;
            }
        }
        KnnWeights::Distance => {
            let exact: Vec<usize> = neighbors.iter().filter(|n| n.1 == 0.0).map(|n| n.0).collect();
            if exact.is_empty() {
                for &(i, d) in &neighbors {
                    votes[train.labels[i]] += 1.0 / d;
                }
            } else {
                for i in exact {
                    votes[train.labels[i]] += 1.0;
                }
            }
        }
    }
    Ok(argmax(&votes))
}

impl KnnModel {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        knn_predict(&self.train, &self.config, x)
    }
}
