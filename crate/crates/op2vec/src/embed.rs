//! Per-sample embedding extraction, run in parallel across samples.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use op2vec_core::corpus::LabeledDataset;
use op2vec_core::dataset::LabeledVectors;
use op2vec_core::eval::{self, BaselineOptions};
use op2vec_core::hmm::{self, BaumWelchParams, HmmModel, RestartSchedule};
use op2vec_core::pca2vec::{self, PcaOptions};
use op2vec_core::rng::{derive_indexed, derive_seed};
use op2vec_core::word2vec::{self, Word2VecConfig};
use op2vec_core::{hmm2vec, EmbeddingSource};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hmm2VecParams {
    pub n: usize,
    pub schedule: RestartSchedule,
    pub training: BaumWelchParams,
    /// Symbol whose emission probability orders the hidden states.
    pub anchor: usize,
}

impl Default for Hmm2VecParams {
    fn default() -> Self {
        Self { n: 2, schedule: RestartSchedule::opcode_default(), training: BaumWelchParams::default(), anchor: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pca2VecParams {
    pub window: usize,
    pub pca: PcaOptions,
}

impl Default for Pca2VecParams {
    fn default() -> Self {
        Self { window: 10, pca: PcaOptions::default() }
    }
}

/// One of the per-sample embedding pipelines and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EmbedMethod {
    Hmm2vec(Hmm2VecParams),
    Pca2vec(Pca2VecParams),
    Word2vec(Word2VecConfig),
}

impl EmbedMethod {
    pub fn source(&self) -> EmbeddingSource {
        match self {
            EmbedMethod::Hmm2vec(_) => EmbeddingSource::Hmm2Vec,
            EmbedMethod::Pca2vec(_) => EmbeddingSource::Pca2Vec,
            EmbedMethod::Word2vec(_) => EmbeddingSource::Word2Vec,
        }
    }

    pub fn default_for(source: EmbeddingSource) -> Option<Self> {
        match source {
            EmbeddingSource::Hmm2Vec => Some(EmbedMethod::Hmm2vec(Hmm2VecParams::default())),
            EmbeddingSource::Pca2Vec => Some(EmbedMethod::Pca2vec(Pca2VecParams::default())),
            EmbeddingSource::Word2Vec => Some(EmbedMethod::Word2vec(Word2VecConfig::opcode_default())),
            EmbeddingSource::Baseline => None,
        }
    }

    /// Embeds sample `index`. Every randomized step draws from `seed`.
    pub fn embed(&self, codes: &[usize], m: usize, seed: u64, index: usize) -> op2vec_core::Result<Vec<f64>> {
        match self {
            EmbedMethod::Hmm2vec(p) => {
                let sample_seed = derive_indexed(derive_seed(seed, "hmm2vec"), index as u64);
                let (model, _) = hmm::train_with_restarts(codes, p.n, m, &p.schedule, sample_seed, &p.training)?;
                Ok(hmm2vec::extract(&model, p.anchor)?.values)
            }
            EmbedMethod::Pca2vec(p) => Ok(pca2vec::embed_sequence(codes, m, p.window, &p.pca)?.values),
            EmbedMethod::Word2vec(cfg) => {
                // One seed for all samples, so every sample starts from the same weights.
                let cfg = Word2VecConfig { seed: derive_seed(seed, "word2vec"), ..*cfg };
                let model = word2vec::train_sequences(&[codes.to_vec()], m, &cfg)?;
                Ok(word2vec::extract(&model, m)?.values)
            }
        }
    }
}

/// Embedding rows for a dataset, in dataset order, with failed samples left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub source: EmbeddingSource,
    pub families: Vec<String>,
    /// Dataset index of each row.
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub failures: Vec<(usize, String)>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn attempted(&self) -> usize {
        self.rows.len() + self.failures.len()
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / self.attempted().max(1) as f64
    }

    /// Rows for the given dataset indices (skipping failed samples).
    pub fn vectors_for(&self, dataset_indices: &[usize]) -> AppResult<LabeledVectors> {
        let mut position = vec![usize::MAX; self.indices.iter().max().map_or(0, |&m| m + 1)];
        for (row, &i) in self.indices.iter().enumerate() {
            position[i] = row;
        }
        let rows: Vec<usize> = dataset_indices
            .iter()
            .filter_map(|&i| position.get(i).copied().filter(|&r| r != usize::MAX))
            .collect();
        Ok(LabeledVectors::new(
            rows.iter().map(|&r| self.rows[r].clone()).collect(),
            rows.iter().map(|&r| self.labels[r]).collect(),
            self.families.clone(),
        )?)
    }

    pub fn to_vectors(&self) -> AppResult<LabeledVectors> {
        Ok(LabeledVectors::new(self.rows.clone(), self.labels.clone(), self.families.clone())?)
    }

    /// CSV with header `label,v0,v1,...`; labels are family names.
    pub fn write_csv(&self, path: &Path) -> AppResult<()> {
        let header = std::iter::once("label".to_owned()).chain((0..self.dim()).map(|i| format!("v{i}")));
        let rows = self.rows.iter().zip(&self.labels).map(|(row, &l)| {
            std::iter::once(self.families[l].clone()).chain(row.iter().map(|v| v.to_string())).collect::<Vec<_>>()
        });
        crate::io::write_csv(path, header, rows)
    }

    /// Errors out when more than `max_rate` of the samples failed.
    pub fn check_failures(&self, max_rate: f64) -> AppResult<()> {
        if self.failure_rate() > max_rate {
            let (i, msg) = &self.failures[0];
            return Err(AppError::Training(format!(
                "{} of {} samples failed (first: sample {i}: {msg})",
                self.failures.len(),
                self.attempted()
            )));
        }
        Ok(())
    }
}

/// Share of failed samples above which a run is reported as failed.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Embeds every sample of `dataset` in parallel. `progress` receives the
/// number of finished samples and the total.
pub fn embed_dataset(
    method: &EmbedMethod,
    dataset: &LabeledDataset,
    seed: u64,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> EmbeddingTable {
    let done = AtomicUsize::new(0);
    let total = dataset.len();
    let results: Vec<op2vec_core::Result<Vec<f64>>> = dataset
        .sequences
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let r = method.embed(seq.codes(), seq.m(), seed, i);
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(p) = progress {
                p(finished, total);
            }
            r
        })
        .collect();
    let mut table = EmbeddingTable {
        source: method.source(),
        families: dataset.families.clone(),
        indices: Vec::new(),
        labels: Vec::new(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) if row.iter().all(|v| v.is_finite()) => {
                table.indices.push(i);
                table.labels.push(dataset.labels[i]);
                table.rows.push(row);
            }
            Ok(_) => table.failures.push((i, "non-finite embedding".into())),
            Err(e) => table.failures.push((i, e.to_string())),
        }
    }
    table
}

/// Per-family models fitted on `train`, trained in parallel.
pub fn train_family_models(train: &LabeledDataset, options: &BaselineOptions, seed: u64) -> AppResult<Vec<HmmModel>> {
    if train.families.len() < 2 {
        return Err(AppError::Usage("baseline features need at least 2 families".into()));
    }
    let m = eval::family_alphabet(train)?;
    let seed = derive_seed(seed, "baseline");
    let models: Vec<op2vec_core::Result<HmmModel>> = (0..train.families.len())
        .into_par_iter()
        .map(|f| eval::train_family_model(train, f, m, options, seed))
        .collect();
    Ok(models.into_iter().collect::<op2vec_core::Result<Vec<_>>>()?)
}

/// Baseline score vectors for every sample of `dataset` under `models`.
pub fn baseline_table(models: &[HmmModel], dataset: &LabeledDataset) -> EmbeddingTable {
    let results: Vec<op2vec_core::Result<Vec<f64>>> =
        dataset.sequences.par_iter().map(|s| eval::score_vector(models, s.codes())).collect();
    let mut table = EmbeddingTable {
        source: EmbeddingSource::Baseline,
        families: dataset.families.clone(),
        indices: Vec::new(),
        labels: Vec::new(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) if row.iter().all(|v| v.is_finite()) => {
                table.indices.push(i);
                table.labels.push(dataset.labels[i]);
                table.rows.push(row);
            }
            Ok(_) => table.failures.push((i, "non-finite score".into())),
            Err(e) => table.failures.push((i, e.to_string())),
        }
    }
    table
}
