use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row}); raise the ridge")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: Option<String>,
    },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("insufficient samples: n = {n} must exceed {required}")]
    InsufficientSamples { n: usize, required: usize },
    #[error("invalid Beta shape (a = {a}, b = {b}); both must be positive")]
    InvalidShape { a: f64, b: f64 },
    #[error("argument {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },
    #[error("threshold shapes ({a}, {b}) do not match model shapes ({expected_a}, {expected_b})")]
    ShapeMismatch {
        a: f64,
        b: f64,
        expected_a: f64,
        expected_b: f64,
    },
    #[error("development set must contain both classes")]
    DegenerateDevSet,
    #[error("empty batch")]
    EmptyBatch,
    #[error("zero vector in cosine similarity")]
    ZeroVector,
    #[error("insufficient class data: {0}")]
    InsufficientClassData(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("covariance of the sample is singular")]
    SingularCovariance,
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("invalid PCA request: {0}")]
    InvalidComponents(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("only one class present")]
    SingleClass,
    #[error("{}:{line}: {message}", .path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("dataset too small to split: {0}")]
    TooSmallForSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &Option<String>) -> String {
    context
        .as_ref()
        .map(|c| format!(" ({c})"))
        .unwrap_or_default()
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context: None,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidComponents(_) => ErrorKind::Config,
            Parse { .. }
            | DuplicateId(_)
            | TooSmallForSplit(_)
            | VersionMismatch { .. }
            | Io { .. }
            | DimensionMismatch { .. }
            | InsufficientClassData(_)
            | DegenerateDevSet
            | EmptyBatch
            | LengthMismatch { .. }
            | SingleClass
            | TooFewSamples { .. }
            | InsufficientSamples { .. } => ErrorKind::Data,
            NotPositiveDefinite { .. }
            | InvalidShape { .. }
            | OutOfDomain { .. }
            | ShapeMismatch { .. }
            | ZeroVector
            | NonFiniteLoss { .. }
            | SingularCovariance
            | ZeroVariance => ErrorKind::Numerical,
        }
    }
}
