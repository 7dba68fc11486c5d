use std::path::PathBuf;

use thiserror::Error;

use crate::planar::Frame;

/// Errors raised by the frame algebra.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("rotation matrix is not orthonormal (|RᵀR - I| = {deviation:.3e}, det = {det:.6})")]
    NotOrthonormal { deviation: f64, det: f64 },
    #[error("expected a wrench expressed in frame {expected:?}, got {found:?}")]
    WrongFrame { expected: Frame, found: Frame },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Errors raised while fitting the suction-cup sensor model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("insufficient excitation: vacuum pressure does not vary across the no-load samples")]
    InsufficientExcitation,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate scale fit: {0}")]
    DegenerateScale(String),
    #[error("invalid calibration: {0}")]
    Invalid(String),
}

/// The barrier is undefined once the margin reaches zero; in discrete time this
/// means the object already let go.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("detached in discrete time: attachment margin f_m = {margin:.6} N <= 0")]
pub struct DetachedFault {
    pub margin: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Detached(#[from] DetachedFault),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
}

/// Scenario validation failure. Each entry is `field.path: message`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("cannot plot an empty trace")]
    EmptyTrace,
    #[error("{path}: plotting failed: {message}")]
    Plot { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
