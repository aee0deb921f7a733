use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-increasing timestamps at row {row}")]
    NonIncreasingTimestamps { row: usize },
    #[error("mask not binary at ({row}, {col}): {value}")]
    MaskNotBinary { row: usize, col: usize, value: u8 },
    #[error("zero spread in variable `{variable}`")]
    ZeroSpread { variable: String },
    #[error("variable `{variable}` has fewer than {required} observed entries")]
    TooFewObservations { variable: String, required: usize },
    #[error("window length {len} exceeds series length {n}")]
    WindowTooLong { len: usize, n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("variable count mismatch: expected {expected}, got {got}")]
    VariableCountMismatch { expected: usize, got: usize },
    #[error("no observed data")]
    NoObservedData,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("Lorenz-96 state blew up at step {step}; try a smaller dt")]
    BlowUp { step: usize },
    #[error("empty evaluation mask")]
    EmptyEvalMask,
    #[error("unsupported {format} version {found} (expected {expected})")]
    Version {
        format: String,
        found: u32,
        expected: u32,
    },
    #[error("malformed file {path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
