use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the localsvm library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input vector does not have the dimension the operation expects.
    #[error("dimension mismatch at index {index}: expected {expected}, found {found}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },

    /// The operation is not defined for the requested loss or kernel.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("region fitting failed: {0}")]
    Fit(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input file.
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// One or more configuration fields failed validation.
    #[error("configuration validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
