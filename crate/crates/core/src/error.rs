use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the simulator, the entropy pipeline and the file
/// front end. Variants map one-to-one onto CLI exit codes (see `exit_code`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config key `{key}`: {reason}")]
    ConfigKey { key: String, reason: String },

    #[error("layout: {0}")]
    Layout(String),

    #[error("singular parallel network in group {group}")]
    SingularNetwork { group: usize },

    #[error("non-finite temperature at node ({ix}, {iy}) at t = {time} s")]
    NonFinite { ix: usize, iy: usize, time: f64 },

    #[error("zero-mean window on signal {signal}")]
    ZeroMeanWindow { signal: usize },

    #[error("window too short: {len} samples for embedding dimension {m}")]
    WindowTooShort { len: usize, m: usize },

    #[error("degenerate training statistic: {0}")]
    DegenerateTraining(String),

    #[error("unusable scenario labeling: {0}")]
    Labeling(String),

    #[error("alarm at t = {t_f} falls inside the warm-up window of {window} samples")]
    AlarmInWarmup { t_f: usize, window: usize },

    #[error("dataset line {line}: {reason}")]
    DataRow { line: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigKey {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 simulation, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigKey { .. } | Error::Layout(_) => 2,
            Error::AlarmInWarmup { .. } => 2,
            Error::SingularNetwork { .. } | Error::NonFinite { .. } => 3,
            Error::DataRow { .. } | Error::Dimension(_) | Error::Io { .. } => 4,
            Error::ZeroMeanWindow { .. }
            | Error::WindowTooShort { .. }
            | Error::DegenerateTraining(_)
            | Error::Labeling(_) => 4,
        }
    }
}
