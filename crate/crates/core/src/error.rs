use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate example id {id:?} in {path}")]
    DuplicateId { path: PathBuf, id: String },
    #[error("example ids differ: only in first {only_a:?}, only in second {only_b:?}")]
    IdMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_owned(),
            source,
        }
    }
}
