use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or missing configuration: unknown dataset, missing word list,
    /// invalid LSH parameters, unparsable config file.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that cannot be processed.
    #[error("data error: {0}")]
    Data(String),

    /// Stage prerequisites missing or their recorded digests do not verify.
    #[error("resume error: {0}")]
    Resume(String),

    #[error("{op} {path}: {source}")]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn resume(msg: impl Into<String>) -> Self {
        Error::Resume(msg.into())
    }

    pub(crate) fn io(op: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            op,
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Resume(_) => 3,
        }
    }
}
