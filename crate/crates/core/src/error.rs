use std::path::PathBuf;

use thiserror::Error;

use crate::decoders::LinearModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector with (numerically) zero 2-norm cannot be placed on the unit sphere.
    #[error("vector has zero norm and cannot be normalized")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pattern has {actual} values but the layout requires {expected}")]
    PatternShapeMismatch { expected: usize, actual: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid label {label:?} at line {line}; labels must be +1 or -1")]
    Label { line: u64, label: String },

    #[error("bad magic bytes in dataset file")]
    MagicMismatch,

    #[error("unsupported dataset format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated dataset file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    /// Coordinate descent hit its sweep budget. The best iterate is attached.
    #[error("lasso did not converge within {} sweeps (lambda = {})", .0.iterations, .0.lambda)]
    NotConverged(Box<LinearModel>),

    #[error("every replicate produced an all-zero weight map (lambda = {lambda})")]
    AllReplicatesDegenerate { lambda: f64 },

    #[error("no sample was out-of-bag in any replicate")]
    NoCoverage,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
