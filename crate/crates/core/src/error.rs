use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the reconstruction pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("invalid sampling mask: {0}")]
    InvalidMaskSpec(String),

    #[error("image of {ny}x{nx} is too small (minimum {min}x{min})")]
    TooSmall { ny: usize, nx: usize, min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("GRAPPA needs at least two coils, got {0}")]
    NeedMultipleCoils(usize),

    #[error("insufficient calibration data: {0}")]
    InsufficientCalibration(String),

    #[error("calibration normal equations are singular for offset {offset}")]
    SingularCalibration { offset: usize },

    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),

    #[error("batch norm needs at least two values per channel in train mode, got {0}")]
    DegenerateBatch(usize),

    #[error("backward called before forward in {0}")]
    BackwardBeforeForward(&'static str),

    #[error("parameter {0} has no gradient")]
    NoGradient(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergedTraining { epoch: usize },

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed container {path:?}: {reason}")]
    Format { path: Option<PathBuf>, reason: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(reason: impl Into<String>) -> Self {
        Error::Format { path: None, reason: reason.into() }
    }
}
