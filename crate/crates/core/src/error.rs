use std::fmt;

use nalgebra::Complex;

/// Errors raised anywhere in the library.
#[derive(Debug)]
pub enum Error {
    DimensionMismatch(String),
    InvalidCovariance(String),
    /// Some mode with |λ| ≥ 1 is not reachable through `B`.
    NotStabilizable { eigenvalue: Complex<f64> },
    /// `[A B]` does not have full row rank, so the one-step prediction
    /// covariance is singular and the log-determinant problem degenerates.
    DegenerateSource,
    NonPositiveInput(String),
    NoConvergence { iterations: usize, residual: f64 },
    /// A solver failure inside a distortion sweep.
    AtDistortion { distortion: f64, source: Box<Error> },
    NonMonotone { distortion: f64, rate: f64, previous: f64 },
    InvalidGp(f64),
    DimensionTooLarge(usize),
    DegenerateComponent { component: usize, delta: f64, lambda: f64 },
    NonPositiveVariance(String),
    NonPositiveSigma(f64),
    IndexOutOfSupport(i64),
    WrongSide,
    BitstreamCorrupt(String),
    CodecDesync { step: u64 },
    Config(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch(s) => write!(f, "dimension mismatch: {s}"),
            Error::InvalidCovariance(s) => write!(f, "invalid covariance: {s}"),
            Error::NotStabilizable { eigenvalue } => write!(
                f,
                "pair (A, B) is not stabilizable: mode {:.6}{:+.6}i is unreachable",
                eigenvalue.re, eigenvalue.im
            ),
            Error::DegenerateSource => {
                write!(f, "[A B] is rank deficient; prediction covariance is singular")
            }
            Error::NonPositiveInput(s) => write!(f, "non-positive input: {s}"),
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::AtDistortion { distortion, source } => {
                write!(f, "at D = {distortion}: {source}")
            }
            Error::NonMonotone { distortion, rate, previous } => write!(
                f,
                "rate increased with distortion at D = {distortion}: {rate} > {previous}"
            ),
            Error::InvalidGp(g) => write!(
                f,
                "normalized second moment {g} is below the sphere bound 1/(2πe)"
            ),
            Error::DimensionTooLarge(p) => write!(f, "dimension {p} not supported here"),
            Error::DegenerateComponent { component, delta, lambda } => write!(
                f,
                "component {component}: posterior variance {delta} exceeds prior {lambda}"
            ),
            Error::NonPositiveVariance(s) => write!(f, "non-positive variance: {s}"),
            Error::NonPositiveSigma(s) => write!(f, "standard deviation must be positive, got {s}"),
            Error::IndexOutOfSupport(i) => write!(f, "index {i} outside the PMF support"),
            Error::WrongSide => write!(f, "operation not valid for this codec side"),
            Error::BitstreamCorrupt(s) => write!(f, "corrupt bitstream: {s}"),
            Error::CodecDesync { step } => {
                write!(f, "encoder and decoder reconstructions differ at step {step}")
            }
            Error::Config(s) => write!(f, "config error: {s}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::AtDistortion { source, .. } => Some(source.as_ref()),
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
