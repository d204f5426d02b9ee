//! Opcode-sequence feature engineering.
//!
//! This crate holds the algorithmic core: discrete hidden Markov models
//! (scoring, decoding, Baum-Welch with scaling and random restarts), the three
//! embedding families built on top of token sequences (HMM2Vec, PCA2Vec,
//! Word2Vec), four from-scratch classifiers (kNN, random forest, SVM, MLP) and
//! the evaluation protocol (stratified splits, k-fold grid search, confusion
//! matrices, overfitting sweeps).
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and parallel
//! drivers live in the `op2vec` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifiers;
pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod hmm2vec;
pub mod linalg;
mod math;
pub mod pca2vec;
pub mod rng;
pub mod word2vec;

pub use embedding::{EmbeddingSource, EmbeddingVector};
pub use error::{Error, Result};
