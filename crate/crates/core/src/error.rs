use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index}: {what} id {id} out of range (declared {limit})")]
    IdOutOfRange {
        index: usize,
        what: &'static str,
        id: u64,
        limit: usize,
    },
    #[error("record {index}: rating {value} outside scale [{min}, {max}]")]
    RatingOutOfScale {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: no ratings found", path.display())]
    EmptyDataset { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot take {requested} ratings from a dataset of {available}")]
    CutTooLarge { requested: usize, available: usize },
    #[error("k-fold split needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("cannot split {records} ratings into {folds} folds")]
    TooFewRecords { records: usize, folds: usize },
    #[error("requested {requested} landmarks but only {available} candidates exist")]
    TooManyLandmarks { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config #{index} failed: {source}")]
    Sweep {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("mean absolute error of an empty prediction set")]
    EmptyEvaluation,
    #[error("{expected} predictions expected, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
