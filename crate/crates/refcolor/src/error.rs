use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] refcolor_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: no PNG frames found")]
    NoFrames { path: PathBuf },
    #[error("{path}: frame is {found:?} (h, w) but the sequence is {expected:?}")]
    MixedDims {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage problems exit with 1, everything else with 2.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
