use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A hypothesis of the limit theorem (e.g. spectral radius below one) does not hold.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("no Gelfand index found within horizon {horizon} (spectral radius {rho})")]
    HorizonExceeded { horizon: usize, rho: f64 },

    #[error("matrix is numerically singular (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("{what} exceeds double precision range; maximum supported n is {max_n}")]
    Range { what: String, max_n: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        Error::HypothesisViolation(msg.into())
    }

    /// True for errors caused by inputs that break the theorem's assumptions
    /// or by malformed configuration, as opposed to I/O failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
