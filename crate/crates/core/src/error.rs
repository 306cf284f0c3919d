use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Validation and domain errors shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm} deviates from 1 by more than 1e-6")]
    NonUnitQuaternion { norm: f64 },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
