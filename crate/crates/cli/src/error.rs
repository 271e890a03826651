use nadbound_core::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{detail}")]
    GapClosure { t: f64, detail: String },
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("{0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::GapClosure { .. } => 3,
            CliError::Certification(_) => 4,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::GapClosure { t, .. } | Error::LevelTracking { t, .. } => CliError::GapClosure {
                t,
                detail: e.to_string(),
            },
            Error::Certification(record) => CliError::Certification(record),
            Error::InvalidLevel { .. } | Error::DimensionMismatch { .. } | Error::InvalidGrid(_) => {
                CliError::Config(e.to_string())
            }
            Error::Io(io) => CliError::Io(io),
            other => CliError::Numerical(other),
        }
    }
}
