//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("value {value} at index {index} is not positive after shifting")]
    NonPositiveInput { index: usize, value: f64 },

    #[error("inverse Box-Cox undefined at index {index}: lambda * y + 1 = {arg} <= 0")]
    DomainError { index: usize, arg: f64 },

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("moving-average window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("series of length {len} cannot be split for horizon {horizon} (need {needed})")]
    SeriesTooShort { len: usize, horizon: usize, needed: usize },

    #[error("unsupported horizon {0}: expected 7 or 14")]
    InvalidHorizon(usize),

    #[error("coefficient of variation undefined: series mean is zero")]
    ZeroMean,

    #[error("series of length {len} too short for an embedding of order {order} and delay {delay}")]
    TooShortForEmbedding { len: usize, order: usize, delay: usize },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no viable ARIMA candidate")]
    NoViableModel,

    #[error("inconsistent input width: expected {expected}, got {got}")]
    InconsistentWidth { expected: usize, got: usize },

    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("unknown region {name:?}{}", suggestion.as_ref().map(|s| format!(" (did you mean {s:?}?)")).unwrap_or_default())]
    UnknownRegion {
        name: String,
        suggestion: Option<String>,
    },

    #[error("invalid curve spec: {0}")]
    InvalidSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline failure: {failed} of {total} windows failed (limit 25%)")]
    FailureThreshold { failed: usize, total: usize },

    #[error("incomplete run directory: {0}")]
    IncompleteRun(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
