use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error classes carry enough context to map onto process exit codes
/// (see [`Error::kind`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("probability row violates simplex at sample {sample}, label {label}: {detail}")]
    RowSum {
        sample: usize,
        label: usize,
        detail: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {index} ({description:?}) has no in-vocabulary tokens")]
    AllOutOfVocabulary { index: usize, description: String },

    #[error("label {index} has a zero-norm embedding")]
    ZeroNorm { index: usize },

    #[error(
        "degenerate similarity distribution: lower threshold {low} >= upper threshold {high}; \
         use a wider percentile pair"
    )]
    DegenerateThresholds { low: f64, high: f64 },

    #[error("non-finite loss in component {component}")]
    NonFinite { component: &'static str },

    #[error("annotation set is empty")]
    EmptyAnnotations,

    #[error("invalid label matrix: {0}")]
    Labels(String),
}

/// Coarse classification used by the command line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Numeric or configuration degeneracy.
    Numeric,
    Io,
    Validation,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::DegenerateThresholds { .. }
            | Error::NonFinite { .. }
            | Error::ZeroNorm { .. }
            | Error::Config(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
