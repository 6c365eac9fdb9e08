use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no radial structure found around the search window")]
    NoRadialStructure,

    #[error("insufficient polar coverage: {occupied} of {total} symmetric pairs occupied")]
    InsufficientCoverage { occupied: usize, total: usize },

    #[error("no detectable rings")]
    NoRings,

    #[error("frame has no gap mask")]
    MissingGapMask,

    #[error("rank deficient: requested {requested} components but data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("too few items: {0}")]
    TooFewItems(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("duplicate human verdict for {id} in round {round}")]
    DuplicateVerdict { id: String, round: u32 },

    #[error("round state conflict: {0}")]
    StateConflict(String),

    #[error("targets unreachable: need {needed} {category}, have {available}")]
    TargetsUnreachable {
        category: String,
        needed: usize,
        available: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
