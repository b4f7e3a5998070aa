use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
///
/// Variants map one-to-one onto the CLI exit codes, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("bad container format: {0}")]
    Format(String),

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("codebook mismatch: stream fingerprint {stream:#018x}, artifacts fingerprint {artifacts:#018x}")]
    CodebookMismatch { stream: u64, artifacts: u64 },

    #[error("budget infeasible: {budget} bits/token is below the base-stage rate {base_rate} bits/token")]
    BudgetInfeasible { budget: f64, base_rate: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Input(_) | Error::UndefinedMetric(_) => 1,
            Error::Io(_) => 2,
            Error::BudgetInfeasible { .. } => 3,
            Error::Format(_) | Error::Corrupt(_) => 4,
            Error::CodebookMismatch { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
