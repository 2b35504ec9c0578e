use thiserror::Error;

/// Errors raised anywhere in the reduced-modeling pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {reason} (condition estimate {condition:.3e})")]
    NumericalFailure { reason: String, condition: f64 },

    #[error("kernel domain violation at column {column}: {reason}")]
    Domain { column: usize, reason: String },

    #[error("unsupported operation: {0}")]
    Capability(String),

    #[error("feature dimension {dim} exceeds cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("left/right spectra do not pair: {0}")]
    Pairing(String),

    #[error("degenerate eigen-pair {index}: |zeta* E xi| = {value:.3e}")]
    DegenerateEigenpair { index: usize, value: f64 },

    #[error("eigenvalue {index} raised to power {power} overflows (t = {t})")]
    HorizonOverflow { index: usize, t: usize, power: usize },

    #[error("degenerate pre-image coefficients: sum of g = {0:.3e}")]
    DegenerateCoefficients(f64),

    #[error("pre-image objective diverges to -inf")]
    Divergence,

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag, used in result tables.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NumericalFailure { .. } => "numerical_failure",
            Error::Domain { .. } => "domain",
            Error::Capability(_) => "unsupported",
            Error::Capacity { .. } => "capacity",
            Error::Pairing(_) => "pairing",
            Error::DegenerateEigenpair { .. } => "degenerate_eigenpair",
            Error::HorizonOverflow { .. } => "horizon_overflow",
            Error::DegenerateCoefficients(_) => "degenerate_coefficients",
            Error::Divergence => "divergence",
            Error::Generation(_) => "generation",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
        }
    }

    /// True for errors caused by numerical breakdown rather than bad configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. }
                | Error::Pairing(_)
                | Error::DegenerateEigenpair { .. }
                | Error::HorizonOverflow { .. }
                | Error::DegenerateCoefficients(_)
                | Error::Divergence
                | Error::Generation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
