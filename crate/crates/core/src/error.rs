use std::io;

use thiserror::Error;

/// Errors produced anywhere in the sampler, generators, metrics, or I/O layers.
#[derive(Debug, Error)]
pub enum GhsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical degeneracy at sweep {sweep}, column {column}: {reason}")]
    NumericalDegeneracy {
        sweep: usize,
        column: usize,
        reason: String,
    },

    #[error("dataset {dataset}: {source}")]
    Dataset {
        dataset: usize,
        #[source]
        source: Box<GhsError>,
    },

    #[error("chain is empty")]
    EmptyChain,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("archive format error: {0}")]
    Format(String),

    #[error("archive corrupted: {0}")]
    Corruption(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GhsError {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            GhsError::Dataset { source, .. } => source.exit_code(),
            GhsError::NotPositiveDefinite(_)
            | GhsError::NumericalDegeneracy { .. }
            | GhsError::Domain(_)
            | GhsError::EmptyChain => 3,
            GhsError::Io(_) | GhsError::Format(_) | GhsError::Corruption(_) | GhsError::Csv(_) => 4,
            GhsError::Dimension(_)
            | GhsError::IndexOutOfRange { .. }
            | GhsError::Parameter(_)
            | GhsError::Config(_) => 2,
        }
    }
}

impl From<csv::Error> for GhsError {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(e) => GhsError::Io(e),
                _ => unreachable!(),
            }
        } else {
            GhsError::Csv(err.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, GhsError>;
