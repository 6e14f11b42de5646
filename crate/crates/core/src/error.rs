use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the training engine and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {source_name}: {message}")]
    Format { source_name: String, message: String },

    /// The Gram matrix handed to the SPD solver is not positive definite.
    /// `pivot` is the index of the offending pivot so the caller can drop it.
    #[error("degenerate Gram matrix (pivot {pivot} collapsed)")]
    DegenerateGram { pivot: usize },

    #[error("numeric blow-up in layer {layer}")]
    NumericBlowup { layer: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericBlowup { .. } => 2,
            Error::Config(_) | Error::Shape(_) => 3,
            Error::Format { .. } => 4,
            Error::DegenerateGram { .. } | Error::Io { .. } => 1,
        }
    }
}
