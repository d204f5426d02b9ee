//! Labeled feature vectors and stratified index splitting.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::rng_from_seed;

/// Feature vectors paired with class indices into `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVectors {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl LabeledVectors {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::BadArgument(alloc::format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            if features.iter().any(|f| f.len() != dim) {
                return Err(Error::BadArgument("feature vectors differ in length".into()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::BadLabel(bad));
        }
        Ok(Self { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledVectors {
        LabeledVectors {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.classes.len())
    }

    /// Distinct classes actually present among the labels.
    pub fn present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn split_stratified(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<(LabeledVectors, LabeledVectors)> {
        let (train, test) = stratified_split(&self.labels, self.n_classes(), train_fraction, seed)?;
        Ok((self.subset(&train), self.subset(&test)))
    }
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

fn indices_by_class(labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Stratified train/test partition of `0..labels.len()`.
///
/// Each class with `n` members contributes `round(n * train_fraction)` members
/// to the training side, clamped so that both sides get at least one. Both
/// returned index lists are sorted.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadArgument(alloc::format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in indices_by_class(labels, n_classes).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::BadArgument(alloc::format!(
                "class {class} has {} sample(s); stratified splitting needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (math_round(n as f64 * train_fraction) as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn math_round(x: f64) -> f64 {
    libm::round(x)
}

/// Stratified k-fold assignment: returns, for each fold, the sorted indices of
/// its validation part. Every index appears in exactly one fold.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::BadArgument(alloc::format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::BadArgument(alloc::format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = vec![Vec::new(); folds];
    // Continue the round-robin across classes so fold sizes differ by at most one.
    let mut next = 0usize;
    for mut members in indices_by_class(labels, n_classes) {
        members.shuffle(&mut rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

/// Minkowski distance of order `p` (p >= 1).
pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
    } else {
        let s: f64 = a.iter().zip(b).map(|(x, y)| math::powf((x - y).abs(), p)).sum();
        math::powf(s, 1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_style_eighty_twenty() {
        let labels: Vec<usize> = (0..7).flat_map(|c| core::iter::repeat_n(c, 1000)).collect();
        let (train, test) = stratified_split(&labels, 7, 0.8, 3).unwrap();
        let tc = class_counts(&train.iter().map(|&i| labels[i]).collect::<Vec<_>>(), 7);
        let sc = class_counts(&test.iter().map(|&i| labels[i]).collect::<Vec<_>>(), 7);
        assert!(tc.iter().all(|&c| c == 800));
        assert!(sc.iter().all(|&c| c == 200));
    }

    #[test]
    fn proportion_rule_on_uneven_classes() {
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let (train, test) = stratified_split(&labels, 2, 0.5, 11).unwrap();
        let tl: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        assert_eq!(class_counts(&tl, 2), vec![3, 2]);
        assert_eq!(train.len() + test.len(), 10);
    }

    #[test]
    fn fraction_bounds_rejected() {
        let labels = [0, 0, 1, 1];
        assert!(matches!(stratified_split(&labels, 2, 1.0, 0), Err(Error::BadArgument(_))));
        assert!(matches!(stratified_split(&labels, 2, 0.0, 0), Err(Error::BadArgument(_))));
    }

    #[test]
    fn singleton_class_rejected() {
        let labels = [0, 0, 1];
        assert!(stratified_split(&labels, 2, 0.5, 0).is_err());
    }

    #[test]
    fn folds_partition_everything_once() {
        let labels: Vec<usize> = (0..53).map(|i| i % 3).collect();
        let folds = stratified_folds(&labels, 3, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn minkowski_orders() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(minkowski(&a, &b, 1.0), 7.0);
        assert_eq!(minkowski(&a, &b, 2.0), 5.0);
        let d3 = minkowski(&a, &b, 3.0);
        assert!((d3 - libm::cbrt(91.0)).abs() < 1e-12);
    }
}
