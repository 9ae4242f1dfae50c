use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver stack and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: String,
    },

    #[error("Gamma function pole at x = {0}")]
    GammaPole(f64),

    #[error(
        "Mittag-Leffler E_{{{alpha},{beta}}}({z}) outside the certified range ({range})"
    )]
    MlOutOfRange {
        alpha: f64,
        beta: f64,
        z: f64,
        range: String,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("Cholesky factorization failed for the {0} matrix (not positive definite)")]
    Factorization(&'static str),

    #[error("generalized eigenproblem failed: {0}")]
    Eigen(String),

    #[error("mode {mode}: E_{{alpha,1}}(-lambda T^alpha) = {value:e} underflows the inverse series")]
    InverseOverflow { mode: usize, value: f64 },

    #[error("degenerate CGM direction: zero step-size denominator at iteration {0}")]
    DegenerateDirection(usize),

    #[error("adjoint and self-adjoint gradients disagree: relative difference {relative:e}")]
    GradientMismatch { relative: f64 },

    #[error("non-finite iterate at CGM iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GammaPole(_) => "gamma_pole",
            Error::MlOutOfRange { .. } => "ml_out_of_range",
            Error::Quadrature(_) => "quadrature",
            Error::Dimension { .. } => "dimension",
            Error::Factorization(_) => "factorization",
            Error::Eigen(_) => "eigen",
            Error::InverseOverflow { .. } => "inverse_overflow",
            Error::DegenerateDirection(_) => "degenerate_direction",
            Error::GradientMismatch { .. } => "gradient_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }
}
