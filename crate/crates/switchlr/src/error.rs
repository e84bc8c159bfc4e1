use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes: parameter and
/// config problems are usage errors (2), malformed input is a data error (3),
/// and a test without a usable variance is a numerical degeneracy (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
