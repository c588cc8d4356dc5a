use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CacheError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("key 0 is reserved as the empty-way marker")]
    ReservedKey,

    #[error("key {key} does not fit in {bits} bits")]
    KeyTooWide { key: u64, bits: u32 },

    #[error("{field} value {value} does not fit in {bits} bits")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        bits: u32,
    },

    #[error("set index {index} out of range for {sets} sets")]
    SetOutOfRange { index: usize, sets: usize },

    #[error("write of {got} elements to a {expected}-way set")]
    WayCountMismatch { expected: usize, got: usize },

    #[error("key {0} appears twice in one set")]
    DuplicateKey(u64),

    #[error("key {key} outside the filter universe of {universe} keys")]
    OutsideUniverse { key: u64, universe: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    TraceParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("trace {0} contains no events")]
    EmptyTrace(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report serialization failed: {0}")]
    Report(String),

    #[error("operation bound violated: {0}")]
    OpBound(String),
}

impl CacheError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CacheError::Io {
            context: context.into(),
            source,
        }
    }
}
