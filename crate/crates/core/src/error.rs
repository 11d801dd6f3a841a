use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("size mismatch in {file}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {what} at frame {frame}, column {column}")]
    NonFinite {
        what: String,
        frame: usize,
        column: usize,
    },

    #[error("value in {what} at frame {frame}, column {column} is not representable as f32")]
    PrecisionLoss {
        what: String,
        frame: usize,
        column: usize,
    },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid vocabulary size {0}: need at least 2 tokens")]
    InvalidVocab(usize),

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("lag grids differ between curves")]
    GridMismatch,

    #[error("loss mask selects no frames")]
    EmptyMask,

    #[error("AUC-ROC undefined: {positives} positive and {negatives} negative samples")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("numeric fault at frame {frame}: {what}")]
    NumericFault { frame: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 1 usage, 2 data, 3 numeric fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NumericFault { .. } => 3,
            _ => 2,
        }
    }
}
