//! CART decision trees (Gini impurity) and bagged random forests.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::knn::argmax;
use crate::dataset::LabeledVectors;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive_indexed, rng_from_seed, Rng};

/// Number of features examined when searching for a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// ⌈√d⌉
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => math::ceil(math::sqrt(d as f64)) as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: MaxFeatures::All }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::BadArgument("max_depth must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::BadArgument("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::BadArgument("min_samples_leaf must be at least 1".into()));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::BadArgument("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::BadArgument("n_estimators must be at least 1".into()));
        }
        self.tree_config().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
}

fn gini_sum(counts: &[usize], n: usize) -> f64 {
    // n * gini, so children can be compared without division.
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    config: TreeConfig,
    max_features: usize,
    nodes: Vec<Node>,
    features: Vec<usize>,
    left_counts: Vec<usize>,
    right_counts: Vec<usize>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    /// Index into the node's sample list sorted by `feature` where the right side starts.
    position: usize,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        counts
    }

    fn best_split(&mut self, idx: &mut [usize], counts: &[usize], rng: &mut Rng) -> Option<SplitChoice> {
        let n = idx.len();
        let leaf = self.config.min_samples_leaf;
        self.features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        for fi in 0..self.features.len() {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            let f = self.features[fi];
            let x = self.x;
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            if x[idx[0]][f] == x[idx[n - 1]][f] {
                continue;
            }
            visited += 1;
            self.left_counts.iter_mut().for_each(|c| *c = 0);
            self.right_counts.copy_from_slice(counts);
            for pos in 1..n {
                let moved = self.y[idx[pos - 1]];
                self.left_counts[moved] += 1;
                self.right_counts[moved] -= 1;
                if pos < leaf || n - pos < leaf {
                    continue;
                }
                let lo = x[idx[pos - 1]][f];
                let hi = x[idx[pos]][f];
                if lo == hi {
                    continue;
                }
                let impurity = gini_sum(&self.left_counts, pos) + gini_sum(&self.right_counts, n - pos);
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((impurity, f, threshold));
                }
            }
        }
        let (_, feature, threshold) = best?;
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let position = idx.partition_point(|&i| x[i][feature] <= threshold);
        Some(SplitChoice { feature, threshold, position })
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let counts = self.class_counts(idx);
        let class = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let pure = counts[class] == idx.len();
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class });
        if pure || depth_capped || idx.len() < self.config.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(idx, &counts, rng) else {
            return id;
        };
        let (l, r) = idx.split_at_mut(split.position);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

impl DecisionTree {
    /// Fits a tree on `sample` (indices into `data`, repeats allowed).
    pub fn fit_on(data: &LabeledVectors, sample: &[usize], config: TreeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if sample.is_empty() {
            return Err(Error::NotFitted);
        }
        let d = data.dim();
        let mut b = Builder {
            x: &data.features,
            y: &data.labels,
            n_classes: data.n_classes(),
            config,
            max_features: config.max_features.resolve(d),
            nodes: Vec::new(),
            features: (0..d).collect(),
            left_counts: vec![0; data.n_classes()],
            right_counts: vec![0; data.n_classes()],
        };
        let mut idx = sample.to_vec();
        b.grow(&mut idx, 0, rng);
        Ok(Self { nodes: b.nodes, n_classes: data.n_classes() })
    }

    pub fn fit(data: &LabeledVectors, config: TreeConfig, seed: u64) -> Result<Self> {
        let sample: Vec<usize> = (0..data.len()).collect();
        Self::fit_on(data, &sample, config, &mut rng_from_seed(seed))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub dim: usize,
    /// Training data held a single class, so every prediction is that class.
    pub degenerate: bool,
}

pub fn rf_train(train: &LabeledVectors, config: ForestConfig) -> Result<Forest> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::NotFitted);
    }
    let n = train.len();
    let trees = (0..config.n_estimators)
        .map(|t| {
            let mut rng = rng_from_seed(derive_indexed(config.seed, t as u64));
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit_on(train, &sample, config.tree_config(), &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        config,
        trees,
        n_classes: train.n_classes(),
        dim: train.dim(),
        degenerate: train.present_classes() < 2,
    })
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::BadArgument("query dimension differs from training data".into()));
        }
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1.0;
        }
        Ok(argmax(&votes))
    }
}

pub fn rf_predict(model: &Forest, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn xor(copies: usize) -> LabeledVectors {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for c in 0..copies {
            let j = c as f64 * 1e-3;
            for (x, y, lab) in [(0.0, 0.0, 0), (1.0, 1.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1)] {
                f.push(vec![x + j, y - j]);
                l.push(lab);
            }
        }
        LabeledVectors::new(f, l, vec!["a".to_string(), "b".to_string()]).unwrap()
    }

    #[test]
    fn unconstrained_tree_memorizes() {
        let d = xor(5);
        let tree = DecisionTree::fit(&d, TreeConfig::default(), 3).unwrap();
        for (x, &y) in d.features.iter().zip(&d.labels) {
            assert_eq!(tree.predict(x), y);
        }
    }

    #[test]
    fn stumps_cannot_fit_xor() {
        let d = xor(25);
        let cfg = ForestConfig { n_estimators: 25, max_depth: Some(1), ..Default::default() };
        let forest = rf_train(&d, cfg).unwrap();
        let correct = d.features.iter().zip(&d.labels).filter(|(x, &y)| forest.predict(x).unwrap() == y).count();
        let acc = correct as f64 / d.len() as f64;
        assert!(acc <= 0.75, "{acc}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = LabeledVectors::new(vec![vec![0.0], vec![1.0]], vec![1, 1], vec!["a".to_string(), "b".to_string()])
            .unwrap();
        let f = rf_train(&d, ForestConfig { n_estimators: 3, ..Default::default() }).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.predict(&[5.0]).unwrap(), 1);
    }

    #[test]
    fn depth_limit_respected() {
        let d = xor(10);
        let cfg = TreeConfig { max_depth: Some(1), ..TreeConfig::default() };
        assert!(DecisionTree::fit(&d, cfg, 0).unwrap().depth() <= 1);
    }

    #[test]
    fn sqrt_features_round_up() {
        assert_eq!(MaxFeatures::Sqrt.resolve(40), 7);
        assert_eq!(MaxFeatures::Sqrt.resolve(7), 3);
        assert_eq!(MaxFeatures::All.resolve(7), 7);
    }
}
