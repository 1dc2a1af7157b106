use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e} after {intervals} intervals)")]
    Quadrature {
        tolerance: f64,
        estimate: f64,
        intervals: usize,
    },

    #[error("quadrature failed at lut node (nu = {nu}, lambda = {lambda}): {source}")]
    LutNode {
        nu: f64,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate softplus fit: {bad} of {total} log-discrepancy samples are not finite")]
    DegenerateFit { bad: usize, total: usize },

    #[error("root finder did not converge for x = {x} (residual {residual:e})")]
    NoConvergence { x: f64, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("patch index {index} out of bounds ({count} positions)")]
    PatchOutOfBounds { index: usize, count: usize },

    #[error("image {width}x{height} is smaller than the {edge}x{edge} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        edge: usize,
    },

    #[error("malformed {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
