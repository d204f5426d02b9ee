//! Experimental protocol: baseline HMM score features, cross-validated grid
//! search, held-out evaluation with confusion matrices, and sweeps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    Activation, Algorithm, ClassifierConfig, ForestConfig, Kernel, KnnConfig, KnnWeights, LearningRate, MaxFeatures,
    MlpConfig, Solver, SvmConfig, TrainedClassifier,
};
use crate::corpus::LabeledDataset;
use crate::dataset::{stratified_folds, LabeledVectors};
use crate::embedding::EmbeddingSource;
use crate::error::{Error, Result};
use crate::hmm::{self, BaumWelchParams, HmmModel, RestartSchedule};
use crate::rng::derive_indexed;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let c = classes.len();
        Self { classes, counts: vec![vec![0; c]; c] }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes.len();
        if truth >= c {
            return Err(Error::BadLabel(truth));
        }
        if predicted >= c {
            return Err(Error::BadLabel(predicted));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.correct() as f64 / total as f64
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// The fitted model was constant (single training class).
    pub degenerate: bool,
}

pub fn evaluate_model(model: &TrainedClassifier, test: &LabeledVectors) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::new(test.classes.clone());
    for (x, &y) in test.features.iter().zip(&test.labels) {
        confusion.record(y, model.predict(x)?)?;
    }
    Ok(Evaluation { accuracy: confusion.accuracy(), confusion, degenerate: model.is_degenerate() })
}

/// Trains once on `train` and scores `test`.
pub fn evaluate(config: &ClassifierConfig, train: &LabeledVectors, test: &LabeledVectors) -> Result<Evaluation> {
    if train.classes != test.classes {
        return Err(Error::BadArgument("train and test class sets differ".into()));
    }
    if let Some(&bad) = test.labels.iter().find(|&&l| l >= test.classes.len()) {
        return Err(Error::BadLabel(bad));
    }
    let model = config.train(train)?;
    evaluate_model(&model, test)
}

/// Cross-validation outcome of one grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub config: ClassifierConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Training error, if any fold failed; the configuration then scores 0.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub results: Vec<ConfigResult>,
    pub winner: usize,
    pub folds: usize,
}

impl GridSearchReport {
    /// Winner is the first configuration with maximal mean accuracy.
    pub fn new(results: Vec<ConfigResult>, folds: usize) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::BadArgument("grid is empty".into()));
        }
        let mut winner = 0;
        for (i, r) in results.iter().enumerate() {
            if r.mean_accuracy > results[winner].mean_accuracy {
                winner = i;
            }
        }
        Ok(Self { results, winner, folds })
    }

    pub fn best(&self) -> &ConfigResult {
        &self.results[self.winner]
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failure.is_some()).count()
    }
}

/// Training/validation index pairs for stratified k-fold CV.
pub fn cv_splits(data: &LabeledVectors, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let parts = stratified_folds(&data.labels, data.n_classes(), folds, seed)?;
    Ok((0..folds)
        .map(|f| {
            let train = parts
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect::<Vec<_>>();
            let mut train = train;
            train.sort_unstable();
            (train, parts[f].clone())
        })
        .collect())
}

/// Mean validation accuracy of one configuration over the given splits.
pub fn cross_validate(
    data: &LabeledVectors,
    config: &ClassifierConfig,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> ConfigResult {
    let mut fold_accuracies = Vec::with_capacity(splits.len());
    for (train, valid) in splits {
        match evaluate(config, &data.subset(train), &data.subset(valid)) {
            Ok(e) => fold_accuracies.push(e.accuracy),
            Err(e) => {
                return ConfigResult {
                    config: config.clone(),
                    fold_accuracies,
                    mean_accuracy: 0.0,
                    failure: Some(alloc::format!("{e}")),
                }
            }
        }
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    ConfigResult { config: config.clone(), fold_accuracies, mean_accuracy, failure: None }
}

/// Stratified k-fold grid search over the training split.
pub fn grid_search(data: &LabeledVectors, grid: &[ClassifierConfig], folds: usize, seed: u64) -> Result<GridSearchReport> {
    if grid.is_empty() {
        return Err(Error::BadArgument("grid is empty".into()));
    }
    let splits = cv_splits(data, folds, seed)?;
    let results = grid.iter().map(|c| cross_validate(data, c, &splits)).collect();
    GridSearchReport::new(results, folds)
}

pub fn mlp_grid(seed: u64) -> Vec<ClassifierConfig> {
    let mut out = Vec::new();
    for lr in [LearningRate::Constant, LearningRate::InvScaling, LearningRate::Adaptive] {
        for hidden in [vec![30, 30, 30], vec![10, 10, 10]] {
            for solver in [Solver::Sgd, Solver::Adam] {
                for activation in [Activation::Relu, Activation::Logistic, Activation::Tanh] {
                    out.push(ClassifierConfig::Mlp(MlpConfig {
                        hidden_layer_sizes: hidden.clone(),
                        activation,
                        solver,
                        learning_rate: lr,
                        max_iter: 10_000,
                        seed,
                        ..MlpConfig::default()
                    }));
                }
            }
        }
    }
    out
}

pub fn svm_grid() -> Vec<ClassifierConfig> {
    let cs = [1.0, 10.0, 100.0, 1000.0];
    let mut out = Vec::new();
    for c in cs {
        for gamma in [0.001, 0.0001] {
            out.push(ClassifierConfig::Svm(SvmConfig::rbf(c, gamma)));
        }
    }
    for c in cs {
        out.push(ClassifierConfig::Svm(SvmConfig::linear(c)));
    }
    out
}

pub fn knn_grid() -> Vec<ClassifierConfig> {
    let mut out = Vec::new();
    for k in [3, 5, 11, 19] {
        for weights in [KnnWeights::Uniform, KnnWeights::Distance] {
            for p in [1, 2] {
                out.push(ClassifierConfig::Knn(KnnConfig::new(k, weights, p)));
            }
        }
    }
    out
}

pub fn rf_grid(seed: u64) -> Vec<ClassifierConfig> {
    let mut out = Vec::new();
    for n_estimators in [30, 100, 500, 1000] {
        for depth in [5, 8, 15, 25, 30] {
            for split in [2, 5, 10, 15, 100] {
                for leaf in [1, 2, 5, 10] {
                    out.push(ClassifierConfig::Rf(ForestConfig {
                        n_estimators,
                        max_depth: Some(depth),
                        min_samples_split: split,
                        min_samples_leaf: leaf,
                        max_features: MaxFeatures::Sqrt,
                        bootstrap: true,
                        seed,
                    }));
                }
            }
        }
    }
    out
}

/// Hyperparameter grid searched for one classifier.
pub fn grid_for(algorithm: Algorithm, seed: u64) -> Vec<ClassifierConfig> {
    match algorithm {
        Algorithm::Knn => knn_grid(),
        Algorithm::Mlp => mlp_grid(seed),
        Algorithm::Rf => rf_grid(seed),
        Algorithm::Svm => svm_grid(),
    }
}

/// All four grids, in report order.
pub fn full_grid(seed: u64) -> Vec<ClassifierConfig> {
    Algorithm::ALL.into_iter().flat_map(|a| grid_for(a, seed)).collect()
}

/// The configuration selected for each feature type.
pub fn selected_config(source: EmbeddingSource, algorithm: Algorithm, seed: u64) -> ClassifierConfig {
    use EmbeddingSource::*;
    match algorithm {
        Algorithm::Knn => {
            let p = match source {
                Hmm2Vec | Pca2Vec => 1,
                Word2Vec => 2,
                Baseline => 3,
            };
            ClassifierConfig::Knn(KnnConfig::new(3, KnnWeights::Distance, p))
        }
        Algorithm::Mlp => {
            let (learning_rate, solver) = match source {
                Hmm2Vec => (LearningRate::InvScaling, Solver::Adam),
                Word2Vec | Baseline => (LearningRate::Constant, Solver::Adam),
                Pca2Vec => (LearningRate::Adaptive, Solver::Sgd),
            };
            ClassifierConfig::Mlp(MlpConfig {
                hidden_layer_sizes: vec![30, 30, 30],
                activation: Activation::Relu,
                solver,
                learning_rate,
                max_iter: 10_000,
                seed,
                ..MlpConfig::default()
            })
        }
        Algorithm::Rf => {
            let (n_estimators, depth) = match source {
                Hmm2Vec => (100, 25),
                Word2Vec => (500, 30),
                Pca2Vec | Baseline => (1000, 30),
            };
            ClassifierConfig::Rf(ForestConfig {
                n_estimators,
                max_depth: Some(depth),
                min_samples_split: 2,
                min_samples_leaf: 1,
                max_features: MaxFeatures::Sqrt,
                bootstrap: true,
                seed,
            })
        }
        Algorithm::Svm => ClassifierConfig::Svm(match source {
            Hmm2Vec => SvmConfig { kernel: Kernel::Linear, c: 1000.0 },
            Word2Vec | Pca2Vec => SvmConfig::rbf(1000.0, 0.001),
            Baseline => SvmConfig::rbf(10.0, 0.0001),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    pub n: usize,
    pub schedule: RestartSchedule,
    pub params: BaumWelchParams,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { n: 2, schedule: RestartSchedule::opcode_default(), params: BaumWelchParams::default() }
    }
}

/// One HMM per family, trained on the concatenation of that family's
/// sequences in `train`.
pub fn train_family_models(train: &LabeledDataset, options: &BaselineOptions, seed: u64) -> Result<Vec<HmmModel>> {
    let families = train.families.len();
    if families < 2 {
        return Err(Error::BadArgument("baseline features need at least 2 families".into()));
    }
    let m = family_alphabet(train)?;
    (0..families).map(|f| train_family_model(train, f, m, options, seed)).collect()
}

/// Alphabet size shared by every sequence of the dataset.
pub fn family_alphabet(data: &LabeledDataset) -> Result<usize> {
    let m = data.sequences.first().map(|s| s.m()).ok_or(Error::NotFitted)?;
    if data.sequences.iter().any(|s| s.m() != m) {
        return Err(Error::BadArgument("sequences use different alphabets".into()));
    }
    Ok(m)
}

/// The pooled model of family `family`.
pub fn train_family_model(
    train: &LabeledDataset,
    family: usize,
    m: usize,
    options: &BaselineOptions,
    seed: u64,
) -> Result<HmmModel> {
    let pooled: Vec<usize> = train
        .sequences
        .iter()
        .zip(&train.labels)
        .filter(|&(_, &l)| l == family)
        .flat_map(|(s, _)| s.codes().iter().copied())
        .collect();
    let name = &train.families[family];
    if pooled.len() < 2 {
        return Err(Error::TrainingFailed(alloc::format!("family {name} has no training observations")));
    }
    hmm::train_with_restarts(&pooled, options.n, m, &options.schedule, derive_indexed(seed, family as u64), &options.params)
        .map(|(model, _)| model)
        .map_err(|e| Error::TrainingFailed(alloc::format!("family {name}: {e}")))
}

/// Per-symbol log-likelihood of `codes` under each model.
pub fn score_vector(models: &[HmmModel], codes: &[usize]) -> Result<Vec<f64>> {
    if codes.is_empty() {
        return Err(Error::EmptySequence);
    }
    models
        .iter()
        .map(|m| hmm::score(m, codes).map(|s| s / codes.len() as f64))
        .collect()
}

/// Score vectors of every sequence of `data` under the family models.
pub fn score_features(models: &[HmmModel], data: &LabeledDataset) -> Result<LabeledVectors> {
    let features = data.sequences.iter().map(|s| score_vector(models, s.codes())).collect::<Result<Vec<_>>>()?;
    LabeledVectors::new(features, data.labels.clone(), data.families.clone())
}

/// Baseline features for `train` and `test`, with family models fitted on `train` only.
pub fn baseline_features(
    train: &LabeledDataset,
    test: &LabeledDataset,
    options: &BaselineOptions,
    seed: u64,
) -> Result<(LabeledVectors, LabeledVectors)> {
    let models = train_family_models(train, options, seed)?;
    Ok((score_features(&models, train)?, score_features(&models, test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// One value per axis.
    pub coords: Vec<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axes: Vec<String>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn accuracy_at(&self, coords: &[usize]) -> Option<f64> {
        self.points.iter().find(|p| p.coords == coords).map(|p| p.accuracy)
    }
}

/// Sweep configurations for kNN over `k_values`, other parameters from `base`.
pub fn knn_sweep_grid(k_values: &[usize], base: KnnConfig) -> Vec<(Vec<usize>, ClassifierConfig)> {
    k_values
        .iter()
        .map(|&k| (vec![k], ClassifierConfig::Knn(KnnConfig { n_neighbors: k, ..base })))
        .collect()
}

/// Sweep configurations for forests over depth x tree count.
pub fn rf_sweep_grid(depths: &[usize], trees: &[usize], base: ForestConfig) -> Vec<(Vec<usize>, ClassifierConfig)> {
    let mut out = Vec::with_capacity(depths.len() * trees.len());
    for &d in depths {
        for &t in trees {
            out.push((
                vec![d, t],
                ClassifierConfig::Rf(ForestConfig { max_depth: Some(d), n_estimators: t, ..base }),
            ));
        }
    }
    out
}

/// Evaluates every sweep point on the held-out split.
pub fn run_sweep(
    axes: &[&str],
    grid: &[(Vec<usize>, ClassifierConfig)],
    train: &LabeledVectors,
    test: &LabeledVectors,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::BadArgument("sweep axis is empty".into()));
    }
    let points = grid
        .iter()
        .map(|(coords, config)| {
            evaluate(config, train, test).map(|e| SweepPoint { coords: coords.clone(), accuracy: e.accuracy })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { axes: axes.iter().map(|a| String::from(*a)).collect(), points })
}

pub fn sweep_knn_k(
    train: &LabeledVectors,
    test: &LabeledVectors,
    k_values: &[usize],
    base: KnnConfig,
) -> Result<SweepReport> {
    run_sweep(&["k"], &knn_sweep_grid(k_values, base), train, test)
}

pub fn sweep_rf(
    train: &LabeledVectors,
    test: &LabeledVectors,
    depths: &[usize],
    trees: &[usize],
    base: ForestConfig,
) -> Result<SweepReport> {
    run_sweep(&["max_depth", "n_estimators"], &rf_sweep_grid(depths, trees, base), train, test)
}
