use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hhmm_core::Error),

    #[error("cannot parse scenario {path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type CliResult<T> = Result<T, CliError>;

/// Exit code and error name for every failure. Documented in the README;
/// keep the two in sync.
pub const EXIT_CODES: [(&str, i32); 19] = [
    ("internal", 1),
    ("usage", 2),
    ("io", 3),
    ("malformed_csv", 4),
    ("non_monotone_time", 5),
    ("empty_recording", 6),
    ("unknown_kind", 7),
    ("unknown_label", 8),
    ("no_overlap", 9),
    ("too_short", 10),
    ("invalid_parameter", 11),
    ("empty_observation", 12),
    ("non_finite_observation", 13),
    ("numerical_underflow", 14),
    ("invalid_model", 15),
    ("invalid_script", 16),
    ("config", 17),
    ("length_mismatch", 18),
    ("scenario_json", 19),
];

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Scenario { .. } => "scenario_json",
            CliError::Usage(_) => "usage",
            CliError::Pool(_) => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code_of(self.code())
    }
}

pub fn exit_code_of(name: &str) -> i32 {
    EXIT_CODES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .unwrap_or(1)
}

/// The single machine-parsable line printed on failure.
pub fn error_line(code: &str, msg: &str) -> String {
    let msg = msg.replace('\n', " ");
    format!("error: code={code} msg={}", msg.trim())
}
