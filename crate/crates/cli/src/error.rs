use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Core(#[from] stablim::Error),

    /// A replayed statistic differs from the stored one.
    #[error("reproducibility failure: statistic {statistic} was {expected:e} ({expected_bits:#018x}), replay gave {actual:e} ({actual_bits:#018x})")]
    Reproducibility {
        statistic: String,
        expected: f64,
        expected_bits: u64,
        actual: f64,
        actual_bits: u64,
    },

    #[error("reproducibility failure: {0}")]
    ReplayShape(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        let path = path.into();
        CliError::Config {
            path: if path.is_empty() || path == "." { "<root>".into() } else { path },
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for reproducibility failures, 2 for configuration, hypothesis and
    /// other errors that stop a run before it can produce a verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Reproducibility { .. } | CliError::ReplayShape(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
