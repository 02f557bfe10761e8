use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined
    /// (e.g. a contour outside the exponential-moment strip).
    #[error("domain error: {0}")]
    Domain(String),

    /// An adaptive quadrature did not reach its tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// The Fourier integrand did not decay below tolerance before the cap.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// A numeric classification could not be decided within its budget.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// A modelling assumption required by the operation is violated.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Path discretization incompatible with the requested computation.
    #[error("scheme error: {0}")]
    Scheme(String),

    /// Invalid model or simulation parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Malformed configuration document.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::Quadrature(_) => "QuadratureError",
            Error::Truncation(_) => "TruncationError",
            Error::Inconclusive(_) => "InconclusiveError",
            Error::Assumption(_) => "AssumptionError",
            Error::Scheme(_) => "SchemeError",
            Error::Parameter(_) => "ParameterError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
