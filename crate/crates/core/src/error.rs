use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    #[error("timestamp {t} ms at line {line} is not after the previous timestamp {prev} ms")]
    NonMonotoneTime { line: usize, t: f64, prev: f64 },

    #[error("recording contains no samples")]
    EmptyRecording,

    #[error("unknown movement kind {0:?}")]
    UnknownKind(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("gaze and stimulus time ranges do not overlap")]
    NoOverlap,

    #[error("need at least {needed} valid samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observation sequence is empty")]
    EmptyObservation,

    #[error("observation {index} is not finite")]
    NonFiniteObservation { index: usize },

    #[error("all state likelihoods underflowed at sample {index}")]
    NumericalUnderflow { index: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid scenario script: {0}")]
    InvalidScript(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name, used by the CLI's error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedCsv { .. } => "malformed_csv",
            Error::NonMonotoneTime { .. } => "non_monotone_time",
            Error::EmptyRecording => "empty_recording",
            Error::UnknownKind(_) => "unknown_kind",
            Error::UnknownLabel(_) => "unknown_label",
            Error::NoOverlap => "no_overlap",
            Error::TooShort { .. } => "too_short",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptyObservation => "empty_observation",
            Error::NonFiniteObservation { .. } => "non_finite_observation",
            Error::NumericalUnderflow { .. } => "numerical_underflow",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidScript(_) => "invalid_script",
            Error::Config { .. } => "config",
            Error::LengthMismatch { .. } => "length_mismatch",
        }
    }
}
