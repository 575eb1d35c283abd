use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("user index {index} out of range for {users} users")]
    UserIndex { index: usize, users: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
            || matches!(self, Error::Csv { source, .. } if source.is_io_error())
            || matches!(self, Error::Json { source, .. } if source.is_io())
    }
}

pub(crate) fn check_user(index: usize, users: usize) -> Result<()> {
    if index < users {
        Ok(())
    } else {
        Err(Error::UserIndex { index, users })
    }
}
