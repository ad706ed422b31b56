use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Network failure that survived every retry.
    #[error("transient failure fetching {url} after {attempts} attempts: {reason}")]
    Transient {
        url: String,
        attempts: u32,
        reason: String,
    },

    #[error("not found: {0}")]
    NotFound(String),

    /// Malformed structured input. `location` points at the offending bytes
    /// when it is known (line:column or byte offset).
    #[error("parse error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse {
        message: String,
        location: Option<String>,
    },

    #[error("cannot decode image {what}: {reason}")]
    Decode { what: String, reason: String },

    #[error("format error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Format { message: String, line: Option<usize> },

    #[error("embeddings missing for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stream error: {0}")]
    Stream(String),

    /// A pipeline stage failed; its partial output is left for inspection.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Error::Parse {
            message: message.into(),
            location: None,
        }
    }

    pub fn format(message: impl Into<String>, line: Option<usize>) -> Self {
        Error::Format {
            message: message.into(),
            line,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

/// Attach a path to a `std::io::Result`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
