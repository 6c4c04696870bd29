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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate image_id {image_id:?} on line {line}")]
    DuplicateImageId { image_id: String, line: usize },

    #[error("payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLengthMismatch { expected: usize, actual: usize },

    #[error("shape {0:?} has a zero dimension")]
    ZeroDimension(Vec<usize>),

    #[error("invalid tensor header: {0}")]
    Header(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown image_id {0:?}")]
    UnknownImage(String),

    #[error("missing score map for image_id {0:?}")]
    MissingScoreMap(String),

    #[error("weights: {0}")]
    Weights(String),

    #[error("label for {0:?} is unresolved")]
    Unresolved(String),

    #[error("too few votes for {image_id:?}: {count} counted, {min} required; needs re-annotation")]
    TooFewVotes {
        image_id: String,
        count: usize,
        min: usize,
    },

    #[error("votes mix image ids {0:?} and {1:?}")]
    MixedImageIds(String, String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("version conflict on {image_id:?}: submitted {submitted}, current {current}")]
    VersionConflict {
        image_id: String,
        submitted: u64,
        current: u64,
    },

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("tensor backend: {0}")]
    Candle(#[from] candle_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
