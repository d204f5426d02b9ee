//! JSON documents for trained models, carrying the vocabulary they were
//! trained over and how they were trained.

use std::path::Path;

use op2vec_core::classifiers::TrainedClassifier;
use op2vec_core::hmm::{HmmModel, TrainingTrace};
use op2vec_core::word2vec::Word2VecModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::AppResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel<T> {
    pub vocabulary: Vec<String>,
    pub seed: u64,
    pub model: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedHmm {
    #[serde(flatten)]
    pub model: HmmModel,
    pub trace: TrainingTrace,
}

pub type SavedHmm = SavedModel<TrainedHmm>;
pub type SavedWord2Vec = SavedModel<Word2VecModel>;
pub type SavedClassifier = SavedModel<TrainedClassifier>;

pub fn save<T: Serialize>(path: &Path, doc: &SavedModel<T>) -> AppResult<()> {
    crate::io::write_json(path, doc)
}

pub fn load<T: DeserializeOwned>(path: &Path) -> AppResult<SavedModel<T>> {
    crate::io::read_json(path)
}
