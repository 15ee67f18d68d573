//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A malformed fixture row; `line` is 1-based within the file.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A single domain-rule violation outside of line-oriented parsing.
    #[error("{0}")]
    Invalid(String),

    /// Aggregated cross-reference report from state assembly.
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// The engine detected a slice in which nothing could ever progress.
    #[error("simulation stalled at t={clock}s: {detail}")]
    Stalled { clock: f64, detail: String },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
