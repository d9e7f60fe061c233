use std::path::PathBuf;

use thiserror::Error;

/// A problem with a parameter file or routine, always naming the offending key or line.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("missing mandatory key {0}")]
    MissingKey(&'static str),
    #[error("malformed value for {key}: {reason}")]
    Malformed { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

impl ConfigError {
    pub(crate) fn malformed(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Malformed {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("timestamp {0} is negative")]
    NegativeTimestamp(i64),
    #[error("epoch {epoch} out of range (EPOCH={limit})")]
    EpochOutOfRange { epoch: u64, limit: u64 },
    #[error("epoch {got} requested out of sequence, expected {expected}")]
    EpochOutOfSequence { expected: u64, got: u64 },
    #[error("arithmetic overflow computing {0}")]
    Overflow(&'static str),
    #[error("cannot encode value: {0}")]
    Encode(String),
    #[error("device {0} is not owned by this client")]
    DeviceNotOwned(usize),
    #[error("query workload: {0}")]
    Query(String),
    #[error("adapter error: {0}")]
    Adapter(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error("accumulated cost-time is zero")]
    ZeroCostTime,
    #[error("query span {span} ms is not divisible by group interval {interval} ms")]
    IndivisibleSpan { span: u64, interval: u64 },
    #[error("monitor interval {0} ms is below the 100 ms minimum")]
    MonitorInterval(u64),
    #[error("malformed descriptor: {0}")]
    Descriptor(String),
    #[error("malformed monitor record: {0}")]
    MonitorRecord(String),
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
