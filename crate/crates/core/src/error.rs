use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolbox. The `Display` output is prefixed with the
/// error category so the CLI can surface it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("configuration error: missing required key `{0}`")]
    MissingKey(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical error: {0}")]
    NonFinite(String),
    #[error("unsupported component: `{0}` is analytic and cannot be trained")]
    UnsupportedComponent(String),
    #[error("comparison refused: {0}")]
    ComparisonRefused(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(what: &str, expected: usize, got: usize) -> Self {
        Error::Usage(format!("{what}: expected dimension {expected}, got {got}"))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
