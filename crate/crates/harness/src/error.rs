use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const PROX_FAILURE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("corrupt trace {path}: {reason}")]
    CorruptTrace { path: PathBuf, reason: String },

    #[error("{0}")]
    Library(#[from] mirrorfree::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidConfig(_)
            | HarnessError::InvalidInput(_)
            | HarnessError::Parse { .. }
            | HarnessError::CorruptTrace { .. } => exit_code::INVALID_INPUT,
            HarnessError::Library(e) => match e {
                mirrorfree::Error::UnknownKind(_)
                | mirrorfree::Error::InvalidParameter(_)
                | mirrorfree::Error::DimensionMismatch { .. }
                | mirrorfree::Error::ZeroDimension => exit_code::INVALID_INPUT,
                _ => exit_code::FAILURE,
            },
            _ => exit_code::FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
