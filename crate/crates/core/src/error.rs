//! Library error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes; the CLI maps them to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Schema,
    Numerical,
    IllPosed,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("tail error: {0}")]
    Tail(String),
    #[error("aperture error: {0}")]
    Aperture(String),
    #[error("no signal: {0}")]
    NoSignal(String),
    #[error("degenerate ridge: eigenvalue ratio {ratio:.4} below {threshold}")]
    DegenerateRidge { ratio: f64, threshold: f64 },
    #[error("degenerate triangulation: {0}")]
    DegenerateTriangulation(String),
    #[error("invalid exponent: mu = {mu} implies s <= 0")]
    InvalidExponent { mu: f64 },
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("inconsistent spread: {0}")]
    InconsistentSpread(String),
    #[error("ill-posed deconvolution: {0}")]
    IllPosedDeconvolution(String),
    #[error("unsupported branch: {0}")]
    Unsupported(String),
    #[error("reliability error: {0}")]
    Reliability(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Schema(_) | Error::Json(_) => ErrorKind::Schema,
            Error::InvalidExponent { .. }
            | Error::NoSolution(_)
            | Error::InconsistentSpread(_)
            | Error::IllPosedDeconvolution(_)
            | Error::DegenerateRidge { .. }
            | Error::DegenerateTriangulation(_) => ErrorKind::IllPosed,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}
