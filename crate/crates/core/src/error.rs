use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("population extinct at period {period}: every agent was removed by selection")]
    Extinction { period: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A config entry that cannot be applied; `origin` is `file:line` or the
    /// command-line override.
    #[error("{origin}: {message}")]
    ConfigEntry { origin: String, message: String },

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Rank correlation is undefined because one input has no rank variance.
    #[error("zero rank variance in {0}")]
    ZeroRankVariance(&'static str),

    #[error("sample outside the support of {family}: {detail}")]
    OutsideSupport {
        family: &'static str,
        detail: String,
    },

    #[error("{failed} of {total} runs failed: {detail}")]
    EnsembleFailure {
        failed: usize,
        total: usize,
        detail: String,
    },
}
