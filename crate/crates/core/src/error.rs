use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("churn profile has zero mean uptime and zero mean downtime")]
    DegenerateChurn,

    #[error("invalid churn profile: mean_up_s={up}, mean_dn_s={down}")]
    InvalidChurn { up: f64, down: f64 },

    #[error("unknown peer id {0}")]
    UnknownPeer(u32),

    #[error("unknown movie id {0}")]
    UnknownMovie(u32),

    #[error("catalog must contain at least one movie")]
    EmptyCatalog,

    #[error("zipf skew must be finite and nonnegative, got {0}")]
    InvalidSkew(f64),

    #[error("exponential mean must be positive and finite, got {0}")]
    InvalidMean(f64),

    #[error("movie weight is undefined for zero replicas (movie {0})")]
    UndefinedWeight(u32),

    #[error("replica budget must be nonnegative, got {0}")]
    NegativeBudget(i64),

    #[error("invalid CTMC parameters: {0}")]
    InvalidCtmc(String),

    #[error("state {k} out of range 1..={max}")]
    StateOutOfRange { k: usize, max: usize },

    #[error("singular linear system at row {0}")]
    Singular(usize),

    #[error("cannot merge reports produced by different configurations")]
    ConfigMismatch,

    #[error("no reports to merge")]
    NothingToMerge,

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("invalid range `{0}`")]
    InvalidRange(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(key: &str, value: impl ToString, reason: impl ToString) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }
}
