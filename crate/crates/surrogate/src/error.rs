use std::path::PathBuf;

/// Failures of the std layer: IO, file formats and wrapped core errors.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: not found")]
    Missing(PathBuf),
    #[error("{path}: corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: refusing to replace a directory not written by this tool")]
    Occupied { path: PathBuf },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] surrogate_core::Error),
}

impl StoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            StoreError::Missing(path)
        } else {
            StoreError::Io { path, source }
        }
    }

    pub fn corrupt(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Self {
        StoreError::Corrupt {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Missing inputs and unusable paths or settings, as opposed to failed computations.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            StoreError::Missing(_) | StoreError::Occupied { .. } | StoreError::Config(_)
        )
    }
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;
