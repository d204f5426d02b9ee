use alloc::string::String;

/// Errors raised by the feature-engineering core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sequence is empty after filtering")]
    EmptySequence,
    #[error("vocabulary needs at least 2 distinct symbols, found {0}")]
    VocabularyTooSmall(usize),
    #[error("invalid synthetic family spec: {0}")]
    BadSpec(String),
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("no state path can explain the observations")]
    Undecodable,
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("training failed: {0}")]
    TrainingFailed(String),
    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("classifier used before fitting")]
    NotFitted,
    #[error("label {0} is outside the class set")]
    BadLabel(usize),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
