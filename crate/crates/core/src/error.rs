use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("integer overflow computing {0}")]
    Overflow(String),
    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("contour |z| = {radius} passes within {distance:e} of eigenvalue {nearest}")]
    ContourHitsSpectrum {
        radius: f64,
        nearest: num_complex::Complex64,
        distance: f64,
    },
    #[error("did not converge: {what} (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// Short machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::DegreeMismatch(_) => "degree-mismatch",
            Error::Validation(_) => "validation",
            Error::Shape(_) => "shape",
            Error::Overflow(_) => "overflow",
            Error::UnsupportedDimension(_) => "unsupported-dimension",
            Error::NoSolution(_) => "no-solution",
            Error::ContourHitsSpectrum { .. } => "contour-hits-spectrum",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Parse { .. } => "parse",
        }
    }

    /// True for numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::ContourHitsSpectrum { .. } | Error::NoSolution(_)
        )
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
