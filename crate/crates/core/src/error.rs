//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScrError>;

#[derive(Debug, Error)]
pub enum ScrError {
    /// Shapes, indices or call order do not satisfy an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error in {location}: {message}")]
    Numeric { location: String, message: String },

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// No anchor in the batch has a positive partner.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScrError {
    pub fn contract(msg: impl Into<String>) -> Self {
        ScrError::Contract(msg.into())
    }

    pub fn numeric(location: impl Into<String>, message: impl Into<String>) -> Self {
        ScrError::Numeric {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ScrError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            ScrError::Contract(_) => "contract",
            ScrError::Numeric { .. } => "numeric",
            ScrError::Ingest { .. } => "ingest",
            ScrError::Split(_) => "split",
            ScrError::Parse { .. } => "parse",
            ScrError::DegenerateBatch(_) => "degenerate_batch",
            ScrError::UndefinedCorrelation(_) => "undefined_correlation",
            ScrError::Config(_) => "config",
            ScrError::Io { .. } => "io",
        }
    }

    /// Process exit code: 2 usage/config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScrError::Config(_) => 2,
            ScrError::Contract(_)
            | ScrError::Ingest { .. }
            | ScrError::Split(_)
            | ScrError::Parse { .. }
            | ScrError::Io { .. } => 3,
            ScrError::Numeric { .. }
            | ScrError::DegenerateBatch(_)
            | ScrError::UndefinedCorrelation(_) => 4,
        }
    }
}
