use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero-norm vector")]
    ZeroNorm,

    #[error("invalid embedding matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { expected: u8, found: u8 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("line {line}: {message}")]
    LabelParse { line: usize, message: String },

    #[error("duplicate sample id {0}")]
    DuplicateId(usize),

    #[error("sample id {id} out of range for {n} embedding rows")]
    IdOutOfRange { id: usize, n: usize },

    #[error("sample ids do not cover 0..{n}: id {missing} is missing")]
    MissingId { missing: usize, n: usize },

    #[error("unknown split {found:?}; allowed values: train, dev, test")]
    UnknownSplit { found: String },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("could not place {classes} class centers {separation} apart after {attempts} attempts")]
    InfeasibleCenters {
        classes: usize,
        separation: f64,
        attempts: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("dunn index needs at least two clusters, got {0}")]
    UndefinedDunn(usize),

    #[error("pool is empty")]
    EmptyPool,

    #[error(
        "initial sampling failed after {actions} actions: found {positives} positives and {negatives} negatives"
    )]
    InitialSampling {
        actions: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("mismatched n_labeled grids: {0}")]
    MismatchedGrid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpec(_) | Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::Diverged { .. } | Error::NonFiniteGradient { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
