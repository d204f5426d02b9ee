//! Embeddings read off trained HMM emission matrices.

use alloc::vec::Vec;

use crate::embedding::{EmbeddingSource, EmbeddingVector};
use crate::error::{Error, Result};
use crate::hmm::HmmModel;
use crate::math;

/// Concatenates the rows of B, ordered by decreasing probability of
/// `anchor_symbol` (stable for ties), giving a vector of length N*M that does
/// not depend on how the hidden states happen to be labeled.
pub fn extract(model: &HmmModel, anchor_symbol: usize) -> Result<EmbeddingVector> {
    let (n, m) = (model.n(), model.m());
    if anchor_symbol >= m {
        return Err(Error::BadArgument(alloc::format!("anchor {anchor_symbol} outside M={m}")));
    }
    if (0..n).any(|i| model.b_row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::BadModel("emission matrix has non-finite entries".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        model
            .b(y, anchor_symbol)
            .partial_cmp(&model.b(x, anchor_symbol))
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values = order.iter().flat_map(|&i| model.b_row(i).iter().copied()).collect();
    Ok(EmbeddingVector::new(values, EmbeddingSource::Hmm2Vec))
}

/// Letter2Vec: the emission probabilities of `symbol` across states (a row of B^T).
pub fn letter2vec(model: &HmmModel, symbol: usize) -> Result<Vec<f64>> {
    if symbol >= model.m() {
        return Err(Error::BadArgument(alloc::format!("symbol {symbol} outside M={}", model.m())));
    }
    Ok(model.b_column(symbol))
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::BadArgument("vectors differ in length".into()));
    }
    let nx = math::sqrt(math::dot(x, x));
    let ny = math::sqrt(math::dot(y, y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((math::dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}
