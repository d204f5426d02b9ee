//! Two-pass ingestion of opcode files: count tokens across the whole
//! manifest, keep the most frequent ones as the vocabulary, then re-read and
//! encode every sample. Results are cached as JSON next to the run outputs.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use op2vec_core::corpus::{
    encode, LabeledDataset, ObservationSequence, TokenCounts, TokenSequence, Vocabulary,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::manifest::Manifest;

pub const DEFAULT_VOCAB_SIZE: usize = 20;

/// Everything a cached ingestion depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub vocab_size: usize,
    pub families: Vec<String>,
    pub files: Vec<FileStamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStamp {
    pub family: String,
    pub path: PathBuf,
    pub bytes: u64,
    pub modified_ns: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub samples: usize,
    pub family_counts: Vec<(String, usize)>,
    /// Tokens read before vocabulary filtering.
    pub tokens: u64,
    /// Tokens kept after dropping those outside the vocabulary.
    pub kept_tokens: u64,
    pub vocabulary: Vec<String>,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} samples in {} families", self.samples, self.family_counts.len())?;
        for (name, count) in &self.family_counts {
            writeln!(f, "  {name}: {count}")?;
        }
        let pct = if self.tokens == 0 { 0.0 } else { 100.0 * self.kept_tokens as f64 / self.tokens as f64 };
        writeln!(f, "{} tokens, {} kept ({pct:.2}%)", self.tokens, self.kept_tokens)?;
        write!(f, "vocabulary ({}): {}", self.vocabulary.len(), self.vocabulary.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedDataset {
    pub fingerprint: Fingerprint,
    pub vocabulary: Vocabulary,
    pub dataset: LabeledDataset,
    pub sample_paths: Vec<PathBuf>,
    pub summary: IngestSummary,
}

fn stamp(family: &str, path: &Path) -> Result<FileStamp, String> {
    let meta = std::fs::metadata(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let modified_ns = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_nanos());
    Ok(FileStamp { family: family.to_owned(), path: path.to_path_buf(), bytes: meta.len(), modified_ns })
}

pub fn fingerprint(manifest: &Manifest, vocab_size: usize) -> AppResult<Fingerprint> {
    let stamps: Vec<Result<FileStamp, String>> =
        manifest.samples.par_iter().map(|s| stamp(&s.family, &s.path)).collect();
    let files = collect_per_file(stamps)?;
    Ok(Fingerprint { vocab_size, families: manifest.families.clone(), files })
}

/// Gathers per-file results, reporting every failure at once.
fn collect_per_file<T>(results: Vec<Result<T, String>>) -> AppResult<Vec<T>> {
    let mut ok = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(ok)
    } else {
        Err(AppError::Data(format!("{} file(s) failed:\n  {}", errors.len(), errors.join("\n  "))))
    }
}

/// Streams the first whitespace-delimited field of every line, lowercased.
fn for_each_opcode(path: &Path, mut f: impl FnMut(&str)) -> Result<(), String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| format!("{}: {e}", path.display()))?;
        if n == 0 {
            return Ok(());
        }
        if let Some(op) = line.split_whitespace().next() {
            if op.bytes().any(|b| b.is_ascii_uppercase()) {
                f(&op.to_lowercase());
            } else {
                f(op);
            }
        }
    }
}

fn count_file(path: &Path) -> Result<TokenCounts, String> {
    let mut counts = TokenCounts::new();
    for_each_opcode(path, |op| counts.add_token(op, 1))?;
    Ok(counts)
}

fn encode_file(path: &Path, vocab: &Vocabulary) -> Result<ObservationSequence, String> {
    let mut codes = Vec::new();
    let mut total = 0usize;
    for_each_opcode(path, |op| {
        total += 1;
        if let Some(c) = vocab.code(op) {
            codes.push(c);
        }
    })?;
    ObservationSequence::with_original_len(codes, vocab.len(), total)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Runs both passes over the manifest.
pub fn ingest(manifest: &Manifest, vocab_size: usize) -> AppResult<IngestedDataset> {
    manifest.validate()?;
    let fingerprint = fingerprint(manifest, vocab_size)?;
    let per_file: Vec<Result<TokenCounts, String>> =
        manifest.samples.par_iter().map(|s| count_file(&s.path)).collect();
    let mut counts = TokenCounts::new();
    for c in collect_per_file(per_file)? {
        counts.merge(&c);
    }
    let vocabulary = counts.into_vocabulary(vocab_size)?;
    let encoded: Vec<Result<ObservationSequence, String>> =
        manifest.samples.par_iter().map(|s| encode_file(&s.path, &vocabulary)).collect();
    let sequences = collect_per_file(encoded)?;
    let labels: Vec<usize> = manifest
        .samples
        .iter()
        .map(|s| manifest.family_index(&s.family).expect("validated manifest"))
        .collect();
    let dataset = LabeledDataset::new(sequences, labels, manifest.families.clone())?;
    let summary = summarize(&dataset, &vocabulary);
    Ok(IngestedDataset {
        fingerprint,
        vocabulary,
        dataset,
        sample_paths: manifest.samples.iter().map(|s| s.path.clone()).collect(),
        summary,
    })
}

/// Builds a dataset from in-memory token sequences labeled with family names.
pub fn from_token_sequences(
    seqs: &[TokenSequence],
    families: &[String],
    vocab_size: usize,
) -> AppResult<(Vocabulary, LabeledDataset)> {
    let mut counts = TokenCounts::new();
    for s in seqs {
        counts.add(s);
    }
    let vocabulary = counts.into_vocabulary(vocab_size)?;
    let mut sequences = Vec::with_capacity(seqs.len());
    let mut labels = Vec::with_capacity(seqs.len());
    for s in seqs {
        let family = s.label.as_deref().ok_or_else(|| AppError::data("unlabeled sequence"))?;
        let label = families
            .iter()
            .position(|f| f == family)
            .ok_or_else(|| AppError::data(format!("unknown family {family:?}")))?;
        sequences.push(encode(s, &vocabulary)?);
        labels.push(label);
    }
    let dataset = LabeledDataset::new(sequences, labels, families.to_vec())?;
    Ok((vocabulary, dataset))
}

pub fn summarize(dataset: &LabeledDataset, vocabulary: &Vocabulary) -> IngestSummary {
    let mut per_family = vec![0usize; dataset.families.len()];
    for &l in &dataset.labels {
        per_family[l] += 1;
    }
    IngestSummary {
        samples: dataset.len(),
        family_counts: dataset.families.iter().cloned().zip(per_family).collect(),
        tokens: dataset.sequences.iter().map(|s| s.original_len() as u64).sum(),
        kept_tokens: dataset.sequences.iter().map(|s| s.len() as u64).sum(),
        vocabulary: vocabulary.symbols().to_vec(),
    }
}

/// Loads the cache when its fingerprint still matches the manifest, otherwise
/// ingests afresh and rewrites it. The flag reports a cache hit.
pub fn ingest_cached(manifest: &Manifest, vocab_size: usize, cache: &Path) -> AppResult<(IngestedDataset, bool)> {
    if cache.exists() {
        let current = fingerprint(manifest, vocab_size)?;
        if let Ok(cached) = crate::io::read_json::<IngestedDataset>(cache) {
            if cached.fingerprint == current {
                return Ok((cached, true));
            }
        }
    }
    let fresh = ingest(manifest, vocab_size)?;
    crate::io::write_json(cache, &fresh)?;
    Ok((fresh, false))
}
