use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments.
    #[error("{0}")]
    Config(evomarket::Error),

    /// Some runs of an ensemble failed; the rest were written.
    #[error("{failed} of {total} runs failed")]
    PartialFailure { failed: usize, total: usize },

    /// Missing or unusable analysis input.
    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(evomarket::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::PartialFailure { .. } => 3,
            CliError::Input(_) => 4,
            _ => 1,
        }
    }
}

impl From<evomarket::Error> for CliError {
    fn from(e: evomarket::Error) -> Self {
        match e {
            evomarket::Error::InvalidConfig(_) | evomarket::Error::ConfigEntry { .. } => {
                CliError::Config(e)
            }
            other => CliError::Core(other),
        }
    }
}
