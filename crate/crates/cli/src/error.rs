use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit status. The numbers are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Usage = 1,
    Data = 2,
    /// Finished, but at least one ADR search ran out of candidates.
    Degraded = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] truncdiff::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: msg.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn status(&self) -> Status {
        use truncdiff::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => Status::Usage,
            CliError::Data { .. } | CliError::Io { .. } => Status::Data,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::UnknownDenoiser(_) => Status::Usage,
                E::Stage { source, .. } if matches!(**source, E::InvalidParameter(_) | E::UnknownDenoiser(_)) => {
                    Status::Usage
                }
                _ => Status::Data,
            },
        }
    }
}
