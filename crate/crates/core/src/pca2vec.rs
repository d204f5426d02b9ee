//! PCA2Vec: windowed co-occurrence counts, the pointwise mutual information
//! matrix, and projection of its columns onto dominant principal components.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::corpus::ObservationSequence;
use crate::embedding::{EmbeddingSource, EmbeddingVector};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, SquareMatrix};
use crate::math;

/// Symmetric pair counts within a window, plus unigram counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceTable {
    m: usize,
    window: usize,
    pairs: Vec<u64>,
    unigrams: Vec<u64>,
    total_tokens: u64,
    total_pairs: u64,
}

impl CooccurrenceTable {
    pub fn new(m: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::BadArgument("window must be at least 1".into()));
        }
        Ok(Self {
            m,
            window,
            pairs: vec![0; m * m],
            unigrams: vec![0; m],
            total_tokens: 0,
            total_pairs: 0,
        })
    }

    /// Counts every pair at distance 1..=W inside `codes`, in both orders.
    /// Windows never span two calls.
    pub fn add_sequence(&mut self, codes: &[usize]) -> Result<()> {
        let m = self.m;
        if let Some(&bad) = codes.iter().find(|&&c| c >= m) {
            return Err(Error::BadArgument(alloc::format!("code {bad} outside M={m}")));
        }
        for (t, &x) in codes.iter().enumerate() {
            self.unigrams[x] += 1;
            for &y in codes.iter().skip(t + 1).take(self.window) {
                self.pairs[x * m + y] += 1;
                self.pairs[y * m + x] += 1;
                self.total_pairs += 2;
            }
        }
        self.total_tokens += codes.len() as u64;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.pairs[i * self.m + j]
    }

    pub fn unigram(&self, i: usize) -> u64 {
        self.unigrams[i]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Sum over the full (mirrored) table.
    pub fn total_pairs(&self) -> u64 {
        self.total_pairs
    }
}

pub fn count_cooccurrences(seqs: &[ObservationSequence], window: usize) -> Result<CooccurrenceTable> {
    let m = seqs.first().map_or(0, ObservationSequence::m);
    if seqs.iter().any(|s| s.m() != m) {
        return Err(Error::BadArgument("sequences use different vocabularies".into()));
    }
    let mut table = CooccurrenceTable::new(m, window)?;
    for s in seqs {
        table.add_sequence(s.codes())?;
    }
    Ok(table)
}

/// Square PMI matrix. Symbols that never occur get all-zero rows and columns
/// and are listed in `absent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiMatrix {
    pub m: usize,
    pub values: Vec<f64>,
    pub absent: Vec<usize>,
}

impl PmiMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    /// Column `i`: the feature vector of symbol `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.m).map(|r| self.get(r, i)).collect()
    }
}

/// X[i][j] = log2( P(i, j) / (P(i) P(j)) ); pairs never seen together get 0.
pub fn pmi(table: &CooccurrenceTable) -> Result<PmiMatrix> {
    if table.total_pairs == 0 {
        return Err(Error::DegenerateInput("no co-occurring pairs".into()));
    }
    let m = table.m;
    let pair_total = table.total_pairs as f64;
    let token_total = table.total_tokens as f64;
    let p_uni: Vec<f64> = table.unigrams.iter().map(|&c| c as f64 / token_total).collect();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let c = table.count(i, j);
            if c == 0 || p_uni[i] == 0.0 || p_uni[j] == 0.0 {
                continue;
            }
            let p_ij = c as f64 / pair_total;
            values[i * m + j] = math::log2(p_ij / (p_uni[i] * p_uni[j]));
        }
    }
    let absent = (0..m).filter(|&i| table.unigrams[i] == 0).collect();
    Ok(PmiMatrix { m, values, absent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Number of components kept.
    pub k: usize,
    /// Mean-center the column vectors before decomposing.
    pub centered: bool,
    /// Dominant components to skip before the `k` kept ones.
    pub skip_top: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self { k: 2, centered: true, skip_top: 0 }
    }
}

/// Principal directions of a set of column vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// Unit component vectors, most dominant first.
    pub components: Vec<Vec<f64>>,
    /// Singular values of the (centered) data matrix, matching `components`.
    pub singular_values: Vec<f64>,
    pub mean: Option<Vec<f64>>,
    /// Number of column vectors the projection was fitted on.
    pub samples: usize,
}

impl PcaProjection {
    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, Vec::len)
    }

    /// Sample variance along each component.
    pub fn explained_variance(&self) -> Vec<f64> {
        let denom = self.samples.saturating_sub(1).max(1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::BadArgument(alloc::format!(
                "vector of length {} projected onto {}-dimensional components",
                x.len(),
                self.dim()
            )));
        }
        let centered: Vec<f64> = match &self.mean {
            Some(mu) => x.iter().zip(mu).map(|(a, b)| a - b).collect(),
            None => x.to_vec(),
        };
        Ok(self.components.iter().map(|c| math::dot(c, &centered)).collect())
    }

    /// Maps component coordinates back to the original space (without adding the mean back).
    pub fn reconstruct_centered(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, &ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }
}

/// PCA on the columns of `x` via the eigen-decomposition of their scatter matrix.
///
/// Each component's sign is fixed so that its largest-magnitude coordinate is
/// positive.
pub fn fit_pca(x: &PmiMatrix, options: &PcaOptions) -> Result<PcaProjection> {
    let m = x.m;
    if options.k == 0 || options.k + options.skip_top > m {
        return Err(Error::BadArgument(alloc::format!(
            "cannot keep {} component(s) after skipping {} in dimension {m}",
            options.k, options.skip_top
        )));
    }
    if x.values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("PMI matrix is identically zero".into()));
    }
    let columns: Vec<Vec<f64>> = (0..m).map(|i| x.column(i)).collect();
    let mean = options.centered.then(|| {
        let mut mu = vec![0.0; m];
        for col in &columns {
            for (acc, v) in mu.iter_mut().zip(col) {
                *acc += v;
            }
        }
        mu.iter_mut().for_each(|v| *v /= m as f64);
        mu
    });
    let mut scatter = SquareMatrix::zeros(m);
    for col in &columns {
        let c: Vec<f64> = match &mean {
            Some(mu) => col.iter().zip(mu).map(|(a, b)| a - b).collect(),
            None => col.clone(),
        };
        for r in 0..m {
            for s in r..m {
                let v = scatter.get(r, s) + c[r] * c[s];
                scatter.set(r, s, v);
            }
        }
    }
    for r in 0..m {
        for s in 0..r {
            scatter.set(r, s, scatter.get(s, r));
        }
    }
    let eig = symmetric_eigen(&scatter);
    let range = options.skip_top..options.skip_top + options.k;
    let components = eig.vectors[range.clone()]
        .iter()
        .map(|v| {
            let pivot = v.iter().copied().fold(0.0f64, |best, c| if c.abs() > best.abs() { c } else { best });
            if pivot < 0.0 {
                v.iter().map(|c| -c).collect()
            } else {
                v.clone()
            }
        })
        .collect();
    let singular_values = eig.values[range].iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    Ok(PcaProjection { components, singular_values, mean, samples: m })
}

/// Projects all M columns of `x` onto the fitted components and flattens the
/// result component-major (component 0's M coordinates first).
pub fn extract(x: &PmiMatrix, projection: &PcaProjection) -> Result<EmbeddingVector> {
    if projection.dim() != x.m {
        return Err(Error::BadArgument(alloc::format!(
            "projection fitted in dimension {} applied to a {}x{} matrix",
            projection.dim(),
            x.m,
            x.m
        )));
    }
    let coords: Vec<Vec<f64>> = (0..x.m).map(|i| projection.project(&x.column(i))).collect::<Result<_>>()?;
    let k = projection.components.len();
    let values = (0..k).flat_map(|c| coords.iter().map(move |row| row[c])).collect();
    Ok(EmbeddingVector::new(values, EmbeddingSource::Pca2Vec))
}

/// Full per-sample pipeline: counts, PMI, PCA, flattened projection.
pub fn embed_sequence(codes: &[usize], m: usize, window: usize, options: &PcaOptions) -> Result<EmbeddingVector> {
    let mut table = CooccurrenceTable::new(m, window)?;
    table.add_sequence(codes)?;
    let x = pmi(&table)?;
    let proj = fit_pca(&x, options)?;
    extract(&x, &proj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_pairs() {
        let mut t = CooccurrenceTable::new(2, 1).unwrap();
        t.add_sequence(&[0, 1, 0]).unwrap();
        assert_eq!(t.count(0, 1), 2);
        assert_eq!(t.count(1, 0), 2);
        assert_eq!(t.count(0, 0), 0);
        assert_eq!(t.total_pairs(), 4);
        let mut single = CooccurrenceTable::new(3, 10).unwrap();
        single.add_sequence(&[2]).unwrap();
        assert_eq!(single.total_pairs(), 0);
        assert!(pmi(&single).is_err());
    }

    #[test]
    fn windows_do_not_cross_sequences() {
        let mut t = CooccurrenceTable::new(3, 5).unwrap();
        t.add_sequence(&[0, 1]).unwrap();
        t.add_sequence(&[2]).unwrap();
        assert_eq!(t.count(1, 2), 0);
        assert_eq!(t.count(0, 1), 1);
    }

    #[test]
    fn pmi_arithmetic() {
        // P(i,j) = 0.1, P(i) = 0.2, P(j) = 0.25.
        let table = CooccurrenceTable {
            m: 2,
            window: 1,
            pairs: vec![0, 1, 1, 8],
            unigrams: vec![4, 5],
            total_tokens: 20,
            total_pairs: 10,
        };
        let x = pmi(&table).unwrap();
        assert!((x.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(x.get(0, 0), 0.0);
    }

    #[test]
    fn absent_symbols_flagged() {
        let mut t = CooccurrenceTable::new(3, 2).unwrap();
        t.add_sequence(&[0, 1, 0, 1]).unwrap();
        let x = pmi(&t).unwrap();
        assert_eq!(x.absent, vec![2]);
        assert!(x.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_pca() {
        let x = PmiMatrix { m: 2, values: vec![4.0, 0.0, 0.0, 1.0], absent: vec![] };
        let proj = fit_pca(&x, &PcaOptions { k: 1, centered: false, skip_top: 0 }).unwrap();
        assert_eq!(proj.components[0], vec![1.0, 0.0]);
        assert!((proj.singular_values[0] - 4.0).abs() < 1e-12);
        let zero = PmiMatrix { m: 2, values: vec![0.0; 4], absent: vec![] };
        assert!(matches!(fit_pca(&zero, &PcaOptions::default()), Err(Error::DegenerateInput(_))));
        assert!(fit_pca(&x, &PcaOptions { k: 3, centered: true, skip_top: 0 }).is_err());
    }

    #[test]
    fn skip_top_drops_dominant_direction() {
        let x = PmiMatrix { m: 2, values: vec![4.0, 0.0, 0.0, 1.0], absent: vec![] };
        let proj = fit_pca(&x, &PcaOptions { k: 1, centered: false, skip_top: 1 }).unwrap();
        assert_eq!(proj.components[0], vec![0.0, 1.0]);
    }

    #[test]
    fn embedding_length_is_k_times_m() {
        let codes: alloc::vec::Vec<usize> = (0..400).map(|i| (i * 7 + i / 3) % 20).collect();
        let e = embed_sequence(&codes, 20, 10, &PcaOptions::default()).unwrap();
        assert_eq!(e.len(), 40);
        assert_eq!(e, embed_sequence(&codes, 20, 10, &PcaOptions::default()).unwrap());
    }
}
