use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{kind} index {index} out of bounds (len {len})")]
    IndexOutOfBounds {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample {index} has no label")]
    MissingLabel { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("triple {index} cannot be corrupted within its entity categories")]
    Uncorruptable { index: usize },

    #[error("enumeration budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::IndexOutOfBounds { .. } => "shape",
            Error::Config(_) => "config",
            Error::MissingLabel { .. } | Error::Empty(_) | Error::Uncorruptable { .. } => "data",
            Error::Diverged { .. } => "diverged",
            Error::BudgetExceeded { .. } => "budget",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape { what, expected, actual }
    }
}
