use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Which pipeline produced a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Hmm2Vec,
    Pca2Vec,
    Word2Vec,
    Baseline,
}

impl EmbeddingSource {
    pub const ALL: [EmbeddingSource; 4] = [
        EmbeddingSource::Baseline,
        EmbeddingSource::Hmm2Vec,
        EmbeddingSource::Pca2Vec,
        EmbeddingSource::Word2Vec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingSource::Hmm2Vec => "hmm2vec",
            EmbeddingSource::Pca2Vec => "pca2vec",
            EmbeddingSource::Word2Vec => "word2vec",
            EmbeddingSource::Baseline => "baseline",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl core::fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed-length real feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source: EmbeddingSource) -> Self {
        Self { values, source }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// All-zero vectors carry no information (e.g. an untrained model).
    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}
