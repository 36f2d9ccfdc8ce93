use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AamError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("composed warp folds over (triangle {triangle} flipped)")]
    NonDiffeomorphicUpdate { triangle: usize },

    #[error("tracking lost: {masked} of {total} mesh pixels fall outside the image")]
    TrackingLost { masked: usize, total: usize },

    #[error("anchor points are collinear or coincident")]
    DegenerateAnchors,

    #[error("no usable training samples: {0}")]
    EmptyTraining(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("model format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AamError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AamError::Io {
            path: path.into(),
            source,
        }
    }
}
