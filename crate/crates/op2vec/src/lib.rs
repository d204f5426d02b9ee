//! Pipelines around `op2vec-core`: dataset manifests and ingestion,
//! synthetic corpora, parallel embedding extraction, experiment and sweep
//! runners, the letter-HMM experiment, and the file formats they read and
//! write.

pub mod cli;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod io;
pub mod letters;
pub mod manifest;
pub mod models;
pub mod synth;

pub use error::{AppError, AppResult};
