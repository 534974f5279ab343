use std::path::PathBuf;
use thiserror::Error;

/// Top-level error type. The CLI maps `Validation`/`Parse` to exit code 2
/// and `Solver` to exit code 3.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        SimError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Io { .. } | SimError::Parse { .. } | SimError::Validation(_) => 2,
            SimError::Solver(_) | SimError::Infeasible(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
