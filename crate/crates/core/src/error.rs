use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Input errors are problems with what the
/// caller supplied; everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("model validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("improper chain: value undefined{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    ImproperChain { context: Option<String> },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("value iteration did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("non-finite gradient entry at {0}")]
    NonFiniteGradient(String),

    #[error(
        "enumeration cap exceeded: {count} instances > cap {cap}; use the abstraction-refinement evaluator"
    )]
    EnumerationCap { count: u128, cap: u128 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn improper(context: impl Into<String>) -> Self {
        Error::ImproperChain {
            context: Some(context.into()),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input (exit code 1) rather than a
    /// runtime failure (exit code 2).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Validation(_) | Error::Parse { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
