//! Token ingestion: tokenizing raw text, building frequency-ranked
//! vocabularies, encoding sequences, synthetic labeled families and
//! stratified dataset splits.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::stratified_split;
use crate::error::{Error, Result};
use crate::rng::{derive_indexed, rng_from_seed, Rng};

/// Token used for a run of whitespace in letter mode.
pub const WORD_SPACE: &str = " ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizeMode {
    /// One mnemonic per line; operands after the first whitespace are dropped.
    Opcode,
    /// Letters a-z plus a single word-space symbol.
    Letter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub label: Option<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, label: Option<String>) -> Self {
        Self { tokens, label }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(raw_text: &str, mode: TokenizeMode) -> Result<TokenSequence> {
    let tokens = match mode {
        TokenizeMode::Opcode => raw_text
            .lines()
            .filter_map(|line| line.split_whitespace().next())
            .map(|op| op.to_lowercase())
            .collect::<Vec<_>>(),
        TokenizeMode::Letter => letter_tokens(raw_text),
    };
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(TokenSequence::new(tokens, None))
}

fn letter_tokens(raw_text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut pending_space = false;
    for ch in raw_text.chars() {
        if ch.is_ascii_alphabetic() {
            if pending_space && !out.is_empty() {
                out.push(WORD_SPACE.to_string());
            }
            pending_space = false;
            out.push(ch.to_ascii_lowercase().to_string());
        } else if ch.is_whitespace() {
            pending_space = true;
        }
        // Everything else (digits, punctuation, non-ASCII letters) is dropped
        // without breaking the current word.
    }
    out
}

/// Global token counts, accumulated one sequence at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: BTreeMap<String, u64>,
}

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, seq: &TokenSequence) {
        for tok in &seq.tokens {
            self.add_token(tok, 1);
        }
    }

    pub fn add_token(&mut self, token: &str, count: u64) {
        if let Some(c) = self.counts.get_mut(token) {
            *c += count;
        } else {
            self.counts.insert(token.to_string(), count);
        }
    }

    pub fn merge(&mut self, other: &TokenCounts) {
        for (tok, &c) in &other.counts {
            self.add_token(tok, c);
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Keeps the `max_size` most frequent tokens, ties broken lexicographically.
    pub fn into_vocabulary(self, max_size: usize) -> Result<Vocabulary> {
        let distinct = self.counts.len();
        if distinct < 2 {
            return Err(Error::VocabularyTooSmall(distinct));
        }
        if max_size < 2 {
            return Err(Error::VocabularyTooSmall(max_size));
        }
        let mut ranked: Vec<(String, u64)> = self.counts.into_iter().collect();
        // BTreeMap iteration is already lexicographic; a stable sort on count keeps it.
        ranked.sort_by_key(|r| core::cmp::Reverse(r.1));
        ranked.truncate(max_size);
        Vocabulary::new(ranked.into_iter().map(|(t, _)| t).collect())
    }
}

/// Ordered set of distinct symbols; a symbol's code is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    symbols: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;
    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.symbols)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { symbols: v.symbols }
    }
}

impl Vocabulary {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::BadArgument(alloc::format!("duplicate symbol {s:?}")));
            }
        }
        if symbols.len() < 2 {
            return Err(Error::VocabularyTooSmall(symbols.len()));
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn code(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn symbol(&self, code: usize) -> Option<&str> {
        self.symbols.get(code).map(String::as_str)
    }

    /// Codes back to tokens. Panics on a code outside the vocabulary.
    pub fn decode(&self, codes: &[usize]) -> Vec<String> {
        codes.iter().map(|&c| self.symbols[c].clone()).collect()
    }

    /// One-hot vector of length M for `code`.
    pub fn one_hot(&self, code: usize) -> Vec<u8> {
        let mut v = alloc::vec![0u8; self.len()];
        v[code] = 1;
        v
    }
}

/// Inverse of [`Vocabulary::one_hot`]: index of the single set position.
pub fn from_one_hot(v: &[u8]) -> Option<usize> {
    let mut hot = v.iter().enumerate().filter(|(_, &b)| b != 0);
    let (i, _) = hot.next()?;
    if hot.next().is_some() {
        return None;
    }
    Some(i)
}

pub fn build_vocabulary(corpus: &[TokenSequence], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::BadArgument("empty corpus".into()));
    }
    let mut counts = TokenCounts::new();
    for seq in corpus {
        counts.add(seq);
    }
    counts.into_vocabulary(max_size)
}

/// Integer-coded observations over a vocabulary of size `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSequence {
    codes: Vec<usize>,
    m: usize,
    original_len: usize,
}

impl ObservationSequence {
    pub fn new(codes: Vec<usize>, m: usize) -> Result<Self> {
        let original_len = codes.len();
        Self::with_original_len(codes, m, original_len)
    }

    pub fn with_original_len(codes: Vec<usize>, m: usize, original_len: usize) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&bad) = codes.iter().find(|&&c| c >= m) {
            return Err(Error::BadArgument(alloc::format!("code {bad} outside vocabulary of size {m}")));
        }
        Ok(Self { codes, m, original_len })
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }
}

/// Maps tokens to codes, deleting out-of-vocabulary tokens.
pub fn encode(seq: &TokenSequence, vocab: &Vocabulary) -> Result<ObservationSequence> {
    let codes: Vec<usize> = seq.tokens.iter().filter_map(|t| vocab.code(t)).collect();
    ObservationSequence::with_original_len(codes, vocab.len(), seq.tokens.len())
}

/// First-order Markov chain generating one synthetic family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFamilySpec {
    pub name: String,
    /// Token text of each chain state.
    pub symbols: Vec<String>,
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix, `symbols.len()` square.
    pub transitions: Vec<Vec<f64>>,
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

const STOCHASTIC_TOL: f64 = 1e-9;

fn check_distribution(what: &str, row: &[f64], width: usize) -> Result<()> {
    if row.len() != width {
        return Err(Error::BadSpec(alloc::format!("{what} has {} entries, expected {width}", row.len())));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::BadSpec(alloc::format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::BadSpec(alloc::format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl SyntheticFamilySpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.symbols.len();
        if m == 0 {
            return Err(Error::BadSpec(alloc::format!("family {} has no symbols", self.name)));
        }
        check_distribution("initial distribution", &self.initial, m)?;
        if self.transitions.len() != m {
            return Err(Error::BadSpec(alloc::format!(
                "transition matrix has {} rows, expected {m}",
                self.transitions.len()
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            check_distribution(&alloc::format!("transition row {i}"), row, m)?;
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::BadSpec(alloc::format!(
                "length range [{}, {}] is invalid",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Deterministic stream of synthetic samples, family by family.
///
/// Each item is `(family index, state codes)` where codes index the family's
/// `symbols`. Sample `j` of a family uses a seed derived from the family seed
/// and `j`, so any sample can be regenerated independently.
pub struct SyntheticGenerator<'a> {
    specs: &'a [SyntheticFamilySpec],
    chains: Vec<(Vec<f64>, Vec<Vec<f64>>)>,
    family: usize,
    sample: usize,
}

impl<'a> SyntheticGenerator<'a> {
    pub fn new(specs: &'a [SyntheticFamilySpec]) -> Result<Self> {
        for s in specs {
            s.validate()?;
        }
        let chains = specs
            .iter()
            .map(|s| (cumulative(&s.initial), s.transitions.iter().map(|r| cumulative(r)).collect()))
            .collect();
        Ok(Self { specs, chains, family: 0, sample: 0 })
    }

    /// Total number of samples the generator will yield.
    pub fn total(&self) -> usize {
        self.specs.iter().map(|s| s.samples).sum()
    }
}

impl Iterator for SyntheticGenerator<'_> {
    type Item = (usize, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        while self.family < self.specs.len() && self.sample >= self.specs[self.family].samples {
            self.family += 1;
            self.sample = 0;
        }
        let spec = self.specs.get(self.family)?;
        let (init, rows) = &self.chains[self.family];
        let mut rng = rng_from_seed(derive_indexed(spec.seed, self.sample as u64));
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut codes = Vec::with_capacity(len);
        let mut state = draw(init, &mut rng);
        codes.push(state);
        for _ in 1..len {
            state = draw(&rows[state], &mut rng);
            codes.push(state);
        }
        let family = self.family;
        self.sample += 1;
        Some((family, codes))
    }
}

/// Runs every family's Markov chain and returns labeled token sequences.
pub fn generate_synthetic_families(specs: &[SyntheticFamilySpec]) -> Result<Vec<TokenSequence>> {
    let gen = SyntheticGenerator::new(specs)?;
    Ok(gen
        .map(|(f, codes)| {
            let spec = &specs[f];
            TokenSequence::new(
                codes.iter().map(|&c| spec.symbols[c].clone()).collect(),
                Some(spec.name.clone()),
            )
        })
        .collect())
}

/// Encoded sequences with family labels (indices into `families`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub sequences: Vec<ObservationSequence>,
    pub labels: Vec<usize>,
    pub families: Vec<String>,
}

impl LabeledDataset {
    pub fn new(sequences: Vec<ObservationSequence>, labels: Vec<usize>, families: Vec<String>) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(Error::BadArgument("sequence/label count mismatch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= families.len()) {
            return Err(Error::BadLabel(bad));
        }
        Ok(Self { sequences, labels, families })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            families: self.families.clone(),
        }
    }
}

/// Stratified train/test split preserving per-family proportions.
pub fn split_stratified(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = stratified_split(&dataset.labels, dataset.families.len(), train_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
