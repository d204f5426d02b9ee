//! English-letter HMM: train on the first T letters of a text corpus and
//! report the emission matrix transposed (one row per letter), which is the
//! Letter2Vec embedding of each letter.

use std::fmt::Write as _;
use std::path::Path;

use op2vec_core::corpus::{tokenize, TokenizeMode, Vocabulary, WORD_SPACE};
use op2vec_core::hmm::{self, BaumWelchParams, HmmModel, RestartSchedule, TrainingTrace};
use op2vec_core::hmm2vec::{cosine_similarity, letter2vec};
use op2vec_core::rng::{derive_indexed, derive_seed};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// States whose emission rows differ by less than this (L1) count as identical.
pub const DEGENERATE_L1: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LetterOptions {
    pub n: usize,
    /// Number of leading letters (word-spaces included) to train on.
    pub length: usize,
    pub iterations: usize,
    /// Random initialisations tried; the highest final likelihood is kept.
    /// `None` follows the opcode restart schedule for `length`.
    pub restarts: Option<usize>,
    pub seed: u64,
}

impl Default for LetterOptions {
    fn default() -> Self {
        Self { n: 2, length: 50_000, iterations: 100, restarts: None, seed: 0 }
    }
}

/// a-z followed by the word-space symbol.
pub fn letter_vocabulary() -> Vocabulary {
    let symbols = ('a'..='z').map(String::from).chain(std::iter::once(WORD_SPACE.to_owned())).collect();
    Vocabulary::new(symbols).expect("27 distinct symbols")
}

/// Drops `/tag` suffixes when most whitespace-separated words carry one, as in
/// part-of-speech tagged corpus distributions.
pub fn strip_pos_tags(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let tagged = words.iter().filter(|w| w.contains('/')).count();
    if words.is_empty() || tagged * 2 <= words.len() {
        return text.to_owned();
    }
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let stripped: Vec<&str> =
            line.split_whitespace().map(|w| w.rsplit_once('/').map_or(w, |(word, _)| word)).collect();
        out.push_str(&stripped.join(" "));
        out.push('\n');
    }
    out
}

/// Encodes the first `length` letter symbols of `text`.
pub fn letter_observations(text: &str, length: usize) -> AppResult<Vec<usize>> {
    let text = strip_pos_tags(text);
    let seq = tokenize(&text, TokenizeMode::Letter)
        .map_err(|_| AppError::BadCorpus("no letters found".into()))?;
    if seq.len() < length {
        return Err(AppError::BadCorpus(format!("{} letters available, {length} requested", seq.len())));
    }
    let vocab = letter_vocabulary();
    Ok(seq.tokens[..length].iter().map(|t| vocab.code(t).expect("letter alphabet")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterReport {
    pub options: LetterOptions,
    pub initial: HmmModel,
    pub model: HmmModel,
    pub trace: TrainingTrace,
    /// Number of random initialisations tried.
    pub restarts: usize,
    /// State holding most of the vowels' emission mass.
    pub vowel_state: usize,
    /// Share of each vowel's column mass on `vowel_state`.
    pub vowel_shares: Vec<(String, f64)>,
    pub cos_a_e: Option<f64>,
    pub cos_a_t: Option<f64>,
    pub degenerate: bool,
}

impl LetterReport {
    pub fn initial_log_likelihood(&self) -> f64 {
        self.trace.initial_log_likelihood()
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.trace.final_log_likelihood()
    }
}

/// Rows of B^T (per-letter emission probabilities across states).
fn bt_rows(model: &HmmModel) -> Vec<Vec<f64>> {
    (0..model.m()).map(|k| model.b_column(k)).collect()
}

fn is_degenerate(model: &HmmModel) -> bool {
    let n = model.n();
    (0..n).all(|i| {
        (0..n).all(|j| {
            let l1: f64 = model.b_row(i).iter().zip(model.b_row(j)).map(|(x, y)| (x - y).abs()).sum();
            l1 < DEGENERATE_L1
        })
    })
}

pub fn train_letters(observations: &[usize], options: &LetterOptions) -> AppResult<LetterReport> {
    let vocab = letter_vocabulary();
    let schedule = match options.restarts {
        Some(r) => RestartSchedule::fixed(r)?,
        None => RestartSchedule::opcode_default(),
    };
    let seed = derive_seed(options.seed, "letters");
    let params = BaumWelchParams { max_iters: options.iterations, min_improvement: f64::NEG_INFINITY };
    let (model, trace) = hmm::train_with_restarts(observations, options.n, vocab.len(), &schedule, seed, &params)?;
    let initial = hmm::init_random(options.n, vocab.len(), derive_indexed(seed, trace.restart as u64))?;
    let code = |s: &str| vocab.code(s).expect("letter alphabet");
    let vowel_mass: Vec<f64> =
        (0..model.n()).map(|s| VOWELS.iter().map(|v| model.b(s, code(v))).sum()).collect();
    let vowel_state = (0..model.n()).fold(0, |best, s| if vowel_mass[s] > vowel_mass[best] { s } else { best });
    let vowel_shares = VOWELS
        .iter()
        .map(|v| {
            let col = model.b_column(code(v));
            let total: f64 = col.iter().sum();
            ((*v).to_owned(), if total > 0.0 { col[vowel_state] / total } else { 0.0 })
        })
        .collect();
    let cos = |x: &str, y: &str| -> Option<f64> {
        let vx = letter2vec(&model, code(x)).ok()?;
        let vy = letter2vec(&model, code(y)).ok()?;
        cosine_similarity(&vx, &vy).ok()
    };
    Ok(LetterReport {
        options: options.clone(),
        cos_a_e: cos("a", "e"),
        cos_a_t: cos("a", "t"),
        degenerate: is_degenerate(&model),
        restarts: schedule.restarts(observations.len()),
        initial,
        model,
        trace,
        vowel_state,
        vowel_shares,
    })
}

pub fn run_letters(corpus: &Path, options: &LetterOptions) -> AppResult<LetterReport> {
    let bytes = std::fs::read(corpus).map_err(|e| AppError::io(corpus, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let obs = letter_observations(&text, options.length)?;
    train_letters(&obs, options)
}

/// Initial and final B^T side by side, then likelihoods and the cosine summary.
pub fn render(report: &LetterReport) -> String {
    let vocab = letter_vocabulary();
    let n = report.model.n();
    let (init, fin) = (bt_rows(&report.initial), bt_rows(&report.model));
    let mut s = String::new();
    let _ = write!(s, "{:<6}", "");
    let _ = write!(s, "{:^w$}", "initial", w = 10 * n);
    let _ = writeln!(s, "  {:^w$}", "final", w = 10 * n);
    for (k, symbol) in vocab.symbols().iter().enumerate() {
        let label = if symbol == WORD_SPACE { "space" } else { symbol.as_str() };
        let _ = write!(s, "{label:<6}");
        for v in &init[k] {
            let _ = write!(s, "{v:>10.5}");
        }
        let _ = write!(s, "  ");
        for v in &fin[k] {
            let _ = write!(s, "{v:>10.5}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nlog P(O|model): initial {:.2}, final {:.2} after {} iterations",
        report.initial_log_likelihood(), report.final_log_likelihood(), report.trace.iterations);
    let _ = writeln!(s, "best of {} restarts (restart {})", report.restarts, report.trace.restart);
    let _ = write!(s, "vowel state {}:", report.vowel_state);
    for (v, share) in &report.vowel_shares {
        let _ = write!(s, " {v}={share:.4}");
    }
    s.push('\n');
    let show = |c: Option<f64>| c.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
    let _ = writeln!(s, "cos(V(a),V(e)) = {}", show(report.cos_a_e));
    let _ = writeln!(s, "cos(V(a),V(t)) = {}", show(report.cos_a_t));
    if report.degenerate {
        let _ = writeln!(s, "warning: degenerate emission matrix (states emit alike)");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_text_is_untagged() {
        assert_eq!(strip_pos_tags("The/at Fulton/np-tl County/nn-tl\n"), "The Fulton County\n");
        assert_eq!(strip_pos_tags("and/or but plain words here"), "and/or but plain words here");
    }

    #[test]
    fn short_corpus_is_rejected() {
        let err = letter_observations("abc def", 100).unwrap_err();
        assert!(matches!(err, AppError::BadCorpus(_)));
        assert_eq!(err.exit_code(), 2);
        assert_eq!(letter_observations("ab, c", 4).unwrap(), [0, 1, 26, 2]);
    }

    #[test]
    fn repeated_letter_is_degenerate() {
        let text = "a".repeat(500);
        let obs = letter_observations(&text, 400).unwrap();
        let report = train_letters(&obs, &LetterOptions { length: 400, iterations: 20, restarts: Some(3), ..Default::default() }).unwrap();
        assert!(report.degenerate);
        assert!(render(&report).contains("degenerate"));
    }
}
