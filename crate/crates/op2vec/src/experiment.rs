//! The evaluation protocol end to end: stratified split, features, per
//! classifier grid search (or a fixed configuration), held-out evaluation and
//! reports.

use std::path::{Path, PathBuf};

use op2vec_core::classifiers::{Algorithm, ClassifierConfig};
use op2vec_core::corpus::LabeledDataset;
use op2vec_core::dataset::{stratified_split, LabeledVectors};
use op2vec_core::eval::{self, BaselineOptions, ConfusionMatrix, GridSearchReport, SweepReport};
use op2vec_core::rng::derive_seed;
use op2vec_core::EmbeddingSource;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{self, EmbedMethod, EmbeddingTable};
use crate::error::{AppError, AppResult};

/// How each classifier's configuration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// k-fold grid search over the full parameter grid.
    Grid,
    /// The per-feature-set winners reported for the opcode corpus.
    Selected,
    /// Configurations listed explicitly in the run config.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub features: Vec<EmbeddingSource>,
    /// Embedding parameters; the per-method defaults apply to any method not listed.
    pub embeddings: Vec<EmbedMethod>,
    pub baseline: BaselineOptions,
    pub vocab_size: usize,
    pub selection: Selection,
    pub algorithms: Vec<Algorithm>,
    pub fixed: Vec<ClassifierConfig>,
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            features: vec![EmbeddingSource::Hmm2Vec],
            embeddings: Vec::new(),
            baseline: BaselineOptions::default(),
            vocab_size: crate::ingest::DEFAULT_VOCAB_SIZE,
            selection: Selection::Grid,
            algorithms: Algorithm::ALL.to_vec(),
            fixed: Vec::new(),
            train_fraction: 0.8,
            folds: 5,
            seed: 0,
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> AppResult<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AppError::Usage(format!("train fraction {} must lie in (0, 1)", self.train_fraction)));
        }
        if self.features.is_empty() {
            return Err(AppError::Usage("no feature sets selected".into()));
        }
        if self.selection == Selection::Fixed {
            if self.fixed.is_empty() {
                return Err(AppError::Usage("fixed selection needs at least one classifier config".into()));
            }
            for c in &self.fixed {
                c.validate().map_err(|e| AppError::Usage(e.to_string()))?;
            }
        } else if self.algorithms.is_empty() {
            return Err(AppError::Usage("no classifiers selected".into()));
        }
        if self.selection == Selection::Grid && self.folds < 2 {
            return Err(AppError::Usage("grid search needs at least 2 folds".into()));
        }
        Ok(())
    }

    pub fn method_for(&self, source: EmbeddingSource) -> Option<EmbedMethod> {
        self.embeddings
            .iter()
            .find(|m| m.source() == source)
            .cloned()
            .or_else(|| EmbedMethod::default_for(source))
    }
}

/// Train/test indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_dataset(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> AppResult<Split> {
    let (train, test) =
        stratified_split(&dataset.labels, dataset.families.len(), train_fraction, derive_seed(seed, "split"))?;
    Ok(Split { train, test })
}

/// Feature table for every sample. Baseline models only see the training split.
pub fn features(
    config: &RunConfig,
    source: EmbeddingSource,
    dataset: &LabeledDataset,
    split: &Split,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> AppResult<EmbeddingTable> {
    let table = match config.method_for(source) {
        Some(method) => embed::embed_dataset(&method, dataset, config.seed, progress),
        None => {
            let models = embed::train_family_models(&dataset.subset(&split.train), &config.baseline, config.seed)?;
            embed::baseline_table(&models, dataset)
        }
    };
    table.check_failures(embed::MAX_FAILURE_RATE)?;
    Ok(table)
}

/// Grid search with configurations evaluated in parallel.
pub fn grid_search(data: &LabeledVectors, grid: &[ClassifierConfig], folds: usize, seed: u64) -> AppResult<GridSearchReport> {
    let splits = eval::cv_splits(data, folds, seed)?;
    let results = grid.par_iter().map(|c| eval::cross_validate(data, c, &splits)).collect();
    Ok(GridSearchReport::new(results, folds)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutcome {
    pub algorithm: Algorithm,
    pub config: ClassifierConfig,
    /// Mean CV accuracy of the chosen configuration, when a grid search ran.
    pub cv_accuracy: Option<f64>,
    pub grid_size: usize,
    pub grid_failures: usize,
    pub test_accuracy: f64,
    pub degenerate: bool,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub features: EmbeddingSource,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub dim: usize,
    pub embedding_failures: usize,
    pub outcomes: Vec<ClassifierOutcome>,
}

impl FeatureReport {
    pub fn accuracy(&self, algorithm: Algorithm) -> Option<f64> {
        self.outcomes.iter().find(|o| o.algorithm == algorithm).map(|o| o.test_accuracy)
    }
}

/// Chooses, trains and evaluates every requested classifier on one feature set.
pub fn run_classifiers(
    config: &RunConfig,
    source: EmbeddingSource,
    train: &LabeledVectors,
    test: &LabeledVectors,
    grid_reports: &mut Vec<(Algorithm, GridSearchReport)>,
) -> AppResult<Vec<ClassifierOutcome>> {
    let classifier_seed = derive_seed(config.seed, "classifier");
    let cv_seed = derive_seed(config.seed, "cv");
    let plans: Vec<(ClassifierConfig, Option<GridSearchReport>)> = match config.selection {
        Selection::Fixed => config.fixed.iter().map(|c| (c.clone(), None)).collect(),
        Selection::Selected => config
            .algorithms
            .iter()
            .map(|&a| (eval::selected_config(source, a, classifier_seed), None))
            .collect(),
        Selection::Grid => config
            .algorithms
            .iter()
            .map(|&a| {
                let report = grid_search(train, &eval::grid_for(a, classifier_seed), config.folds, cv_seed)?;
                Ok((report.best().config.clone(), Some(report)))
            })
            .collect::<AppResult<_>>()?,
    };
    let outcomes: Vec<AppResult<ClassifierOutcome>> = plans
        .par_iter()
        .map(|(cfg, report)| {
            let evaluation = eval::evaluate(cfg, train, test)?;
            Ok(ClassifierOutcome {
                algorithm: cfg.algorithm(),
                config: cfg.clone(),
                cv_accuracy: report.as_ref().map(|r| r.best().mean_accuracy),
                grid_size: report.as_ref().map_or(0, |r| r.results.len()),
                grid_failures: report.as_ref().map_or(0, GridSearchReport::failures),
                test_accuracy: evaluation.accuracy,
                degenerate: evaluation.degenerate,
                confusion: evaluation.confusion,
            })
        })
        .collect();
    for (cfg, report) in plans {
        if let Some(r) = report {
            grid_reports.push((cfg.algorithm(), r));
        }
    }
    outcomes.into_iter().collect()
}

/// Runs one feature set and writes its report directory under `out`.
pub fn run_feature_set(
    config: &RunConfig,
    source: EmbeddingSource,
    dataset: &LabeledDataset,
    split: &Split,
    out: Option<&Path>,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> AppResult<FeatureReport> {
    let table = features(config, source, dataset, split, progress)?;
    report_table(config, &table, split, out)
}

/// Evaluates the classifiers on an already computed feature table.
pub fn report_table(config: &RunConfig, table: &EmbeddingTable, split: &Split, out: Option<&Path>) -> AppResult<FeatureReport> {
    let source = table.source;
    let train = table.vectors_for(&split.train)?;
    let test = table.vectors_for(&split.test)?;
    let mut grids = Vec::new();
    let outcomes = run_classifiers(config, source, &train, &test, &mut grids)?;
    let report = FeatureReport {
        features: source,
        seed: config.seed,
        train_size: train.len(),
        test_size: test.len(),
        dim: table.dim(),
        embedding_failures: table.failures.len(),
        outcomes,
    };
    if let Some(dir) = out {
        let dir = dir.join(source.name());
        table.write_csv(&dir.join("embeddings.csv"))?;
        for o in &report.outcomes {
            write_confusion(&dir.join(format!("confusion_{}.csv", o.algorithm)), &o.confusion)?;
        }
        for (algorithm, grid) in &grids {
            write_grid(&dir.join(format!("grid_{algorithm}.csv")), grid)?;
        }
        crate::io::write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

pub fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> AppResult<()> {
    let header = std::iter::once("true\\predicted".to_owned()).chain(cm.classes.iter().cloned());
    let rows = cm.classes.iter().zip(&cm.counts).map(|(name, row)| {
        std::iter::once(name.clone()).chain(row.iter().map(u64::to_string)).collect::<Vec<_>>()
    });
    crate::io::write_csv(path, header, rows)
}

pub fn write_grid(path: &Path, grid: &GridSearchReport) -> AppResult<()> {
    let header = ["rank_order", "config", "mean_cv_accuracy", "failure"].map(str::to_owned);
    let rows = grid.results.iter().enumerate().map(|(i, r)| {
        vec![
            i.to_string(),
            r.config.describe(),
            r.mean_accuracy.to_string(),
            r.failure.clone().unwrap_or_default(),
        ]
    });
    crate::io::write_csv(path, header, rows)
}

/// Feature sets by classifiers, held-out accuracy in each cell.
pub fn accuracy_table_csv(reports: &[FeatureReport], algorithms: &[Algorithm]) -> AppResult<Vec<u8>> {
    let header = std::iter::once("features".to_owned()).chain(algorithms.iter().map(|a| a.name().to_owned()));
    let rows = reports.iter().map(|r| {
        std::iter::once(r.features.name().to_owned())
            .chain(algorithms.iter().map(|&a| r.accuracy(a).map_or_else(String::new, |v| format!("{v:.4}"))))
            .collect::<Vec<_>>()
    });
    crate::io::csv_bytes(header, rows)
}

/// Plain-text rendering of the accuracy table.
pub fn accuracy_table_text(reports: &[FeatureReport], algorithms: &[Algorithm]) -> String {
    let mut s = format!("{:<10}", "");
    for a in algorithms {
        s.push_str(&format!("{:>8}", a.name()));
    }
    s.push('\n');
    for r in reports {
        s.push_str(&format!("{:<10}", r.features.name()));
        for &a in algorithms {
            match r.accuracy(a) {
                Some(v) => s.push_str(&format!("{v:>8.4}")),
                None => s.push_str(&format!("{:>8}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

/// Runs every configured feature set, writing per-set directories plus
/// `accuracy_table.csv` under `config.out`.
pub fn run_experiment(
    config: &RunConfig,
    dataset: &LabeledDataset,
    write: bool,
    progress: Option<&(dyn Fn(EmbeddingSource, usize, usize) + Sync)>,
) -> AppResult<Vec<FeatureReport>> {
    config.validate()?;
    let split = split_dataset(dataset, config.train_fraction, config.seed)?;
    let out = write.then_some(config.out.as_path());
    let mut reports = Vec::new();
    for &source in &config.features {
        let per_sample = progress.map(|p| move |done: usize, total: usize| p(source, done, total));
        let report = run_feature_set(
            config,
            source,
            dataset,
            &split,
            out,
            per_sample.as_ref().map(|f| f as &(dyn Fn(usize, usize) + Sync)),
        )?;
        reports.push(report);
    }
    if let Some(dir) = out {
        let algorithms = table_algorithms(config);
        crate::io::write_atomic(&dir.join("accuracy_table.csv"), &accuracy_table_csv(&reports, &algorithms)?)?;
        crate::io::write_json(&dir.join("split.json"), &split)?;
    }
    Ok(reports)
}

pub fn table_algorithms(config: &RunConfig) -> Vec<Algorithm> {
    match config.selection {
        Selection::Fixed => {
            let mut a: Vec<Algorithm> = config.fixed.iter().map(ClassifierConfig::algorithm).collect();
            a.sort();
            a.dedup();
            a
        }
        _ => config.algorithms.clone(),
    }
}

/// Which overfitting sweep to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepKind {
    KnnK { k: Vec<usize> },
    RfGrid { depths: Vec<usize>, trees: Vec<usize> },
}

/// Held-out accuracy over a sweep; other parameters come from the selected
/// configuration for the feature set.
pub fn run_sweep(
    config: &RunConfig,
    source: EmbeddingSource,
    dataset: &LabeledDataset,
    kind: &SweepKind,
) -> AppResult<SweepReport> {
    let split = split_dataset(dataset, config.train_fraction, config.seed)?;
    let table = features(config, source, dataset, &split, None)?;
    let train = table.vectors_for(&split.train)?;
    let test = table.vectors_for(&split.test)?;
    sweep_on(config, source, &train, &test, kind)
}

pub fn sweep_on(
    config: &RunConfig,
    source: EmbeddingSource,
    train: &LabeledVectors,
    test: &LabeledVectors,
    kind: &SweepKind,
) -> AppResult<SweepReport> {
    let classifier_seed = derive_seed(config.seed, "classifier");
    let (axes, grid): (Vec<&str>, _) = match kind {
        SweepKind::KnnK { k } => {
            let ClassifierConfig::Knn(base) = eval::selected_config(source, Algorithm::Knn, classifier_seed) else {
                unreachable!("kNN selection yields a kNN config")
            };
            (vec!["k"], eval::knn_sweep_grid(k, base))
        }
        SweepKind::RfGrid { depths, trees } => {
            let ClassifierConfig::Rf(base) = eval::selected_config(source, Algorithm::Rf, classifier_seed) else {
                unreachable!("forest selection yields a forest config")
            };
            (vec!["max_depth", "n_estimators"], eval::rf_sweep_grid(depths, trees, base))
        }
    };
    if grid.is_empty() {
        return Err(AppError::Usage("sweep has no points".into()));
    }
    let points: Vec<AppResult<eval::SweepPoint>> = grid
        .par_iter()
        .map(|(coords, cfg)| {
            let e = eval::evaluate(cfg, train, test)?;
            Ok(eval::SweepPoint { coords: coords.clone(), accuracy: e.accuracy })
        })
        .collect();
    Ok(SweepReport {
        axes: axes.into_iter().map(str::to_owned).collect(),
        points: points.into_iter().collect::<AppResult<_>>()?,
    })
}

pub fn write_sweep(path: &Path, report: &SweepReport) -> AppResult<()> {
    let header = report.axes.iter().cloned().chain(std::iter::once("accuracy".to_owned()));
    let rows = report.points.iter().map(|p| {
        p.coords.iter().map(usize::to_string).chain(std::iter::once(p.accuracy.to_string())).collect::<Vec<_>>()
    });
    crate::io::write_csv(path, header, rows)
}
