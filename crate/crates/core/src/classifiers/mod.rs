//! The four classifiers behind one train/predict contract.

pub mod forest;
pub mod knn;
pub mod mlp;
pub mod svm;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledVectors;
use crate::error::{Error, Result};

pub use forest::{rf_predict, rf_train, DecisionTree, Forest, ForestConfig, MaxFeatures, TreeConfig};
pub use knn::{knn_predict, knn_train, KnnConfig, KnnModel, KnnWeights};
pub use mlp::{mlp_predict, mlp_train, Activation, LearningRate, MlpConfig, MlpModel, Solver};
pub use svm::{svm_predict, svm_train, Kernel, SvmConfig, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Mlp,
    Rf,
    Svm,
}

impl Algorithm {
    /// Report order.
    pub const ALL: [Algorithm; 4] = [Algorithm::Knn, Algorithm::Mlp, Algorithm::Rf, Algorithm::Svm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Mlp => "mlp",
            Algorithm::Rf => "rf",
            Algorithm::Svm => "svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }
}

impl core::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ClassifierConfig {
    Knn(KnnConfig),
    Rf(ForestConfig),
    Svm(SvmConfig),
    Mlp(MlpConfig),
}

impl ClassifierConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ClassifierConfig::Knn(_) => Algorithm::Knn,
            ClassifierConfig::Rf(_) => Algorithm::Rf,
            ClassifierConfig::Svm(_) => Algorithm::Svm,
            ClassifierConfig::Mlp(_) => Algorithm::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierConfig::Knn(c) => c.validate(),
            ClassifierConfig::Rf(c) => c.validate(),
            ClassifierConfig::Svm(c) => c.validate(),
            ClassifierConfig::Mlp(c) => c.validate(),
        }
    }

    /// Replaces any seed the configuration carries.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ClassifierConfig::Rf(c) => c.seed = seed,
            ClassifierConfig::Mlp(c) => c.seed = seed,
            ClassifierConfig::Knn(_) | ClassifierConfig::Svm(_) => {}
        }
        self
    }

    /// Short human-readable parameter summary.
    pub fn describe(&self) -> String {
        match self {
            ClassifierConfig::Knn(c) => {
                alloc::format!("n_neighbors={} weights={:?} p={}", c.n_neighbors, c.weights, c.p).to_lowercase()
            }
            ClassifierConfig::Rf(c) => alloc::format!(
                "n_estimators={} max_depth={} min_samples_split={} min_samples_leaf={}",
                c.n_estimators,
                c.max_depth.map_or_else(|| String::from("none"), |d| alloc::format!("{d}")),
                c.min_samples_split,
                c.min_samples_leaf
            ),
            ClassifierConfig::Svm(c) => match c.kernel {
                Kernel::Linear => alloc::format!("kernel=linear C={}", c.c),
                Kernel::Rbf { gamma } => alloc::format!("kernel=rbf C={} gamma={gamma}", c.c),
            },
            ClassifierConfig::Mlp(c) => alloc::format!(
                "hidden={:?} activation={:?} solver={:?} learning_rate={:?} max_iter={}",
                c.hidden_layer_sizes,
                c.activation,
                c.solver,
                c.learning_rate,
                c.max_iter
            )
            .to_lowercase(),
        }
    }

    pub fn train(&self, data: &LabeledVectors) -> Result<TrainedClassifier> {
        Ok(match self {
            ClassifierConfig::Knn(c) => TrainedClassifier::Knn(knn_train(data, *c)?),
            ClassifierConfig::Rf(c) => TrainedClassifier::Rf(rf_train(data, *c)?),
            ClassifierConfig::Svm(c) => TrainedClassifier::Svm(svm_train(data, *c)?),
            ClassifierConfig::Mlp(c) => TrainedClassifier::Mlp(mlp_train(data, c.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "state", rename_all = "lowercase")]
pub enum TrainedClassifier {
    Knn(KnnModel),
    Rf(Forest),
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl TrainedClassifier {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            TrainedClassifier::Knn(_) => Algorithm::Knn,
            TrainedClassifier::Rf(_) => Algorithm::Rf,
            TrainedClassifier::Svm(_) => Algorithm::Svm,
            TrainedClassifier::Mlp(_) => Algorithm::Mlp,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            TrainedClassifier::Knn(m) => m.predict(x),
            TrainedClassifier::Rf(m) => m.predict(x),
            TrainedClassifier::Svm(m) => m.predict(x),
            TrainedClassifier::Mlp(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// True when training saw a single class and the model is constant.
    pub fn is_degenerate(&self) -> bool {
        match self {
            TrainedClassifier::Rf(f) => f.degenerate,
            TrainedClassifier::Knn(m) => m.train.present_classes() < 2,
            TrainedClassifier::Svm(m) => m.machines.iter().all(|mc| matches!(mc, svm::Machine::Constant { .. })),
            TrainedClassifier::Mlp(_) => false,
        }
    }
}

/// Checks that a feature set can be used for training.
pub fn check_trainable(data: &LabeledVectors) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NotFitted);
    }
    if data.features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite feature value".into()));
    }
    Ok(())
}
