use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants split into two families: validation errors (bad input or
/// configuration, CLI exit code 2) and numeric failures raised while
/// training or decomposing (exit code 3). See [`Error::is_numeric`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at record {index}: expected {expected}, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("row count mismatch: corpus has {corpus} records, embeddings have {embeddings} rows")]
    RowCountMismatch { corpus: usize, embeddings: usize },

    #[error("non-finite value in record {index}")]
    NonFinite { index: usize },

    #[error("duplicate id {id:?} at record {index}")]
    DuplicateId { id: String, index: usize },

    #[error("zero-norm vector at record {index} cannot be normalized")]
    ZeroNorm { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("series too short: {len} observations, at least {required} required")]
    SeriesTooShort { len: usize, required: usize },

    #[error("out-of-order observation: expected t={expected}, got t={got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("detector already fired at t={t_d}; no further input accepted")]
    AlreadyDetected { t_d: usize },

    #[error("no utterance of token length {length} to draw from")]
    EmptyStratum { length: usize },

    #[error("insufficient corpus: need {needed} {what} requests, have {available}")]
    InsufficientCorpus {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("malformed {kind} file at record {index}: {message}")]
    Format {
        kind: &'static str,
        index: usize,
        message: String,
    },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("eigendecomposition did not converge ({0})")]
    EigenNoConvergence(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. }
                | Error::NonFiniteGradient { .. }
                | Error::EigenNoConvergence(_)
        )
    }
}
