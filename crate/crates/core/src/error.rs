use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("letter {letter} is outside the alphabet of size {alphabet}")]
    LetterOutOfAlphabet { letter: usize, alphabet: usize },

    #[error(
        "stacked feature matrix is rank deficient (rank {rank} < {cols} columns); \
         use a positive ridge weight gamma"
    )]
    RankDeficient { rank: usize, cols: usize },

    #[error("fit score undefined: reference trajectory has zero norm")]
    ZeroReference,

    #[error("simulation diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite residual at the initial point")]
    NonFiniteInit,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
