use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} is outside the stored field history [{start}, {end}]")]
    OutOfHistory { t: f64, start: f64, end: f64 },

    #[error("CFL condition violated: dt = {dt} exceeds h/sqrt(3) = {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("non-finite value detected in {what} at t = {t}{}", checkpoint.as_ref().map(|c| format!(" (last good checkpoint: {c})")).unwrap_or_default())]
    NonFinite {
        what: String,
        t: f64,
        checkpoint: Option<String>,
    },

    #[error("estimated memory {needed_mb:.0} MB exceeds the budget of {budget_mb:.0} MB")]
    MemoryBudget { needed_mb: f64, budget_mb: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Configuration problem, carrying the 1-based line number when one applies.
#[derive(Debug, Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl Error {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Cfl { .. } | Error::MemoryBudget { .. } => 2,
            Error::NonFinite { .. } | Error::DomainTooSmall(_) | Error::OutOfHistory { .. } => 3,
            _ => 1,
        }
    }
}
