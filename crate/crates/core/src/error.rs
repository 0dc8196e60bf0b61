use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("power of link {link} must be strictly positive, got {value}")]
    NonPositivePower { link: usize, value: f64 },

    #[error("distance must be strictly positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("zero denominator in derived interference map at link {link}")]
    ZeroDenominator { link: usize },

    #[error("interference model does not satisfy the solver hypotheses: {0}")]
    HypothesisNotMet(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("link count mismatch: expected K={expected}, found K={found}")]
    KMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("instance {index} (seed {seed}): {source}")]
    AtInstance {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_instance(index: usize, seed: u64) -> impl FnOnce(Error) -> Error {
        move |e| Error::AtInstance {
            index,
            seed,
            source: Box::new(e),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
