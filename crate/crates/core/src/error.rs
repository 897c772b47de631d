use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {index} is at or behind the camera plane (z = {z:e})")]
    BehindCamera { index: usize, z: f64 },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no feasible candidate: {0}")]
    Infeasible(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn schema(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
