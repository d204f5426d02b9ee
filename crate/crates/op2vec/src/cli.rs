//! Argument parsing and command dispatch for the `op2vec` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use op2vec_core::classifiers::Algorithm;
use op2vec_core::EmbeddingSource;

use crate::error::{AppError, AppResult};
use crate::experiment::{self, RunConfig, Selection, SweepKind};
use crate::ingest::{self, IngestedDataset};
use crate::letters::{self, LetterOptions};
use crate::manifest::Manifest;
use crate::synth::{self, Preset, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "op2vec", version, about = "Opcode-sequence embeddings and classifier experiments")]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize and encode the samples of a manifest, caching the result.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus from per-family Markov chains.
    Synth(SynthArgs),
    /// Write one embedding row per sample as CSV.
    Embed(EmbedArgs),
    /// Split, choose classifier settings, evaluate and write reports.
    Experiment(ExperimentArgs),
    /// Train a letter HMM on a text corpus and print its B^T table.
    Letters(LettersArgs),
    /// Held-out accuracy as a function of kNN k or forest depth/size.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest file, or a directory of `<family>/*.opcodes`.
    pub manifest: PathBuf,
    #[arg(long, default_value_t = ingest::DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
    /// Cache file (defaults to `dataset.json` beside the manifest).
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML with a `[preset]` table and/or `[[families]]` chains.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = Preset::default().samples)]
    pub samples: usize,
    #[arg(long, default_value_t = Preset::default().min_len)]
    pub min_len: usize,
    #[arg(long, default_value_t = Preset::default().max_len)]
    pub max_len: usize,
    #[arg(long, default_value_t = Preset::default().seed)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by the commands that read a dataset and run the protocol.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run config; its entries override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Baseline,
    Hmm2vec,
    Pca2vec,
    Word2vec,
    All,
}

fn sources(features: &[FeatureArg]) -> Vec<EmbeddingSource> {
    let mut out = Vec::new();
    for f in features {
        let add: &[EmbeddingSource] = match f {
            FeatureArg::Baseline => &[EmbeddingSource::Baseline],
            FeatureArg::Hmm2vec => &[EmbeddingSource::Hmm2Vec],
            FeatureArg::Pca2vec => &[EmbeddingSource::Pca2Vec],
            FeatureArg::Word2vec => &[EmbeddingSource::Word2Vec],
            FeatureArg::All => &EmbeddingSource::ALL,
        };
        for s in add {
            if !out.contains(s) {
                out.push(*s);
            }
        }
    }
    out
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub method: FeatureArg,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepName {
    KnnK,
    RfGrid,
}

#[derive(Debug, Args)]
pub struct SweepAxes {
    /// kNN neighbour counts, e.g. `1..75` (inclusive) or `1,3,5`.
    #[arg(long, default_value = "1..75")]
    pub k: String,
    #[arg(long, default_value = "1,2,4,8,15,25,30")]
    pub depths: String,
    #[arg(long, default_value = "1,10,50,100")]
    pub trees: String,
}

impl SweepAxes {
    fn kind(&self, name: SweepName) -> AppResult<SweepKind> {
        Ok(match name {
            SweepName::KnnK => SweepKind::KnnK { k: parse_list(&self.k)? },
            SweepName::RfGrid => SweepKind::RfGrid { depths: parse_list(&self.depths)?, trees: parse_list(&self.trees)? },
        })
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub features: Vec<FeatureArg>,
    #[arg(long, value_enum)]
    pub selection: Option<Selection>,
    /// Comma-separated subset of knn,mlp,rf,svm.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Run an overfitting sweep instead of the classifier comparison.
    #[arg(long, value_enum)]
    pub sweep: Option<SweepName>,
    #[command(flatten)]
    pub axes: SweepAxes,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LettersArgs {
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 50_000)]
    pub length: usize,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Random initialisations (defaults to the restart schedule for the length).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the trained model as JSON.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub name: SweepName,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "baseline")]
    pub features: FeatureArg,
    #[command(flatten)]
    pub axes: SweepAxes,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `1..75` (inclusive), `1,3,5`, or a mix such as `1..5,10,20`.
pub fn parse_list(spec: &str) -> AppResult<Vec<usize>> {
    let bad = || AppError::Usage(format!("cannot parse {spec:?} as a list of integers"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Overlays the entries of a TOML file on top of flag-derived settings.
pub fn overlay_config<T>(base: &T, file: Option<&Path>) -> AppResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let Some(file) = file else {
        let value = toml::Value::try_from(base).map_err(|e| AppError::Usage(e.to_string()))?;
        return value.try_into().map_err(|e: toml::de::Error| AppError::Usage(e.to_string()));
    };
    let mut merged = toml::Value::try_from(base).map_err(|e| AppError::Usage(e.to_string()))?;
    let overlay: toml::Value = crate::io::read_toml(file)?;
    merge(&mut merged, overlay);
    merged.try_into().map_err(|e: toml::de::Error| AppError::Usage(format!("{}: {e}", file.display())))
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn run_config(args: &RunArgs, tweak: impl FnOnce(&mut RunConfig)) -> AppResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(m) = &args.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(v) = args.vocab_size {
        cfg.vocab_size = v;
    }
    tweak(&mut cfg);
    let cfg: RunConfig = overlay_config(&cfg, args.config.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn default_cache(manifest: &Path) -> PathBuf {
    if manifest.is_dir() {
        manifest.join("dataset.json")
    } else {
        manifest.with_file_name("dataset.json")
    }
}

fn load_dataset(cfg: &RunConfig) -> AppResult<IngestedDataset> {
    let path = cfg.manifest.as_ref().ok_or_else(|| AppError::Usage("no manifest given".into()))?;
    let manifest = Manifest::load(path)?;
    let (data, hit) = ingest::ingest_cached(&manifest, cfg.vocab_size, &default_cache(path))?;
    eprintln!("dataset: {} samples ({})", data.dataset.len(), if hit { "cached" } else { "ingested" });
    Ok(data)
}

fn progress(label: String) -> impl Fn(usize, usize) + Sync {
    move |done, total| {
        let step = (total / 20).max(1);
        if done % step == 0 || done == total {
            eprintln!("{label}: {done}/{total}");
        }
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest(a) => {
            let manifest = Manifest::load(&a.manifest)?;
            let cache = a.cache.unwrap_or_else(|| default_cache(&a.manifest));
            let (data, hit) = ingest::ingest_cached(&manifest, a.vocab_size, &cache)?;
            println!("{}", data.summary);
            println!("cache: {} ({})", cache.display(), if hit { "hit" } else { "written" });
        }
        Command::Synth(a) => {
            let flags = SynthConfig {
                preset: Some(Preset { samples: a.samples, min_len: a.min_len, max_len: a.max_len, seed: a.seed, ..Preset::default() }),
                families: Vec::new(),
            };
            let cfg = match &a.config {
                Some(path) => crate::io::read_toml::<SynthConfig>(path)?,
                None => flags,
            };
            let manifest = synth::write_corpus(&cfg.specs()?, &a.out)?;
            println!("{} samples in {} families written to {}", manifest.samples.len(), manifest.families.len(), a.out.display());
        }
        Command::Embed(a) => {
            let cfg = run_config(&a.run, |_| {})?;
            let data = load_dataset(&cfg)?;
            let source = *sources(&[a.method])
                .first()
                .filter(|_| a.method != FeatureArg::All)
                .ok_or_else(|| AppError::Usage("embed takes a single method".into()))?;
            let split = experiment::split_dataset(&data.dataset, cfg.train_fraction, cfg.seed)?;
            let report = progress(source.to_string());
            let table = match cfg.method_for(source) {
                Some(method) => crate::embed::embed_dataset(&method, &data.dataset, cfg.seed, Some(&report)),
                None => {
                    let models = crate::embed::train_family_models(&data.dataset.subset(&split.train), &cfg.baseline, cfg.seed)?;
                    crate::embed::baseline_table(&models, &data.dataset)
                }
            };
            table.write_csv(&a.out)?;
            println!("{} rows x {} columns written to {}; {} failed", table.rows.len(), table.dim(), a.out.display(), table.failures.len());
            table.check_failures(crate::embed::MAX_FAILURE_RATE)?;
        }
        Command::Experiment(a) => {
            let algorithms = a
                .algorithms
                .iter()
                .map(|s| Algorithm::parse(s).ok_or_else(|| AppError::Usage(format!("unknown classifier {s:?}"))))
                .collect::<AppResult<Vec<_>>>()?;
            let cfg = run_config(&a.run, |c| {
                if !a.features.is_empty() {
                    c.features = sources(&a.features);
                }
                if let Some(s) = a.selection {
                    c.selection = s;
                }
                if !algorithms.is_empty() {
                    c.algorithms = algorithms;
                }
                if let Some(f) = a.folds {
                    c.folds = f;
                }
                if let Some(o) = &a.out {
                    c.out = o.clone();
                }
            })?;
            let data = load_dataset(&cfg)?;
            if let Some(name) = a.sweep {
                let kind = a.axes.kind(name)?;
                for &source in &cfg.features {
                    let report = experiment::run_sweep(&cfg, source, &data.dataset, &kind)?;
                    let path = cfg.out.join(format!("sweep_{}_{}.csv", sweep_file(name), source));
                    experiment::write_sweep(&path, &report)?;
                    println!("{}", path.display());
                }
                return Ok(());
            }
            let report = |s: EmbeddingSource, done: usize, total: usize| progress(s.to_string())(done, total);
            let reports = experiment::run_experiment(&cfg, &data.dataset, true, Some(&report))?;
            print!("{}", experiment::accuracy_table_text(&reports, &experiment::table_algorithms(&cfg)));
            println!("reports in {}", cfg.out.display());
        }
        Command::Letters(a) => {
            let options = LetterOptions { n: a.n, length: a.length, iterations: a.iterations, restarts: a.restarts, seed: a.seed };
            let report = letters::run_letters(&a.corpus, &options)?;
            print!("{}", letters::render(&report));
            if let Some(path) = &a.save_model {
                let doc = crate::models::SavedHmm {
                    vocabulary: letters::letter_vocabulary().symbols().to_vec(),
                    seed: a.seed,
                    model: crate::models::TrainedHmm { model: report.model.clone(), trace: report.trace.clone() },
                };
                crate::models::save(path, &doc)?;
            }
        }
        Command::Sweep(a) => {
            let source = sources(&[a.features]);
            let cfg = run_config(&a.run, |c| c.features = source)?;
            let data = load_dataset(&cfg)?;
            let kind = a.axes.kind(a.name)?;
            if cfg.features.len() != 1 {
                return Err(AppError::Usage("sweep takes a single feature set".into()));
            }
            let report = experiment::run_sweep(&cfg, cfg.features[0], &data.dataset, &kind)?;
            experiment::write_sweep(&a.out, &report)?;
            println!("{} points written to {}", report.points.len(), a.out.display());
        }
    }
    Ok(())
}

fn sweep_file(name: SweepName) -> &'static str {
    match name {
        SweepName::KnnK => "knn_k",
        SweepName::RfGrid => "rf_grid",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1..4").unwrap(), [1, 2, 3, 4]);
        assert_eq!(parse_list("1..=3,8, 10").unwrap(), [1, 2, 3, 8, 10]);
        assert!(parse_list("5..2").is_err());
        assert!(parse_list("x").is_err());
        assert!(parse_list("").is_err());
    }

    #[test]
    fn file_entries_override_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 9\nfeatures = [\"pca2vec\"]\n[baseline]\nn = 3\n").unwrap();
        let flags = RunConfig { seed: 1, folds: 7, ..RunConfig::default() };
        let cfg: RunConfig = overlay_config(&flags, Some(&path)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.folds, 7);
        assert_eq!(cfg.features, [EmbeddingSource::Pca2Vec]);
        assert_eq!(cfg.baseline.n, 3);
        assert_eq!(cfg.baseline.params, flags.baseline.params);
    }

    #[test]
    fn all_expands_to_four_feature_sets() {
        assert_eq!(sources(&[FeatureArg::All, FeatureArg::Hmm2vec]).len(), 4);
    }
}
