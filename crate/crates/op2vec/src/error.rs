use std::path::{Path, PathBuf};

/// Failures surfaced by the pipelines, grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus too short: {0}")]
    BadCorpus(String),
    #[error("{0}")]
    Training(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) | AppError::Io { .. } | AppError::BadCorpus(_) => 2,
            AppError::Training(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        AppError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError::Data(msg.into())
    }
}

impl From<op2vec_core::Error> for AppError {
    fn from(e: op2vec_core::Error) -> Self {
        use op2vec_core::Error as E;
        match e {
            E::TrainingDiverged(_) | E::TrainingFailed(_) | E::DegenerateInput(_) | E::NotFitted => {
                AppError::Training(e.to_string())
            }
            _ => AppError::Data(e.to_string()),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
