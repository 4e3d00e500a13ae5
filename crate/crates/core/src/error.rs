use std::path::PathBuf;

/// Errors produced while loading traces, driving the simulator, or scoring.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("path not found: {0}")]
    MissingPath(PathBuf),

    #[error("no traces found in {0}")]
    EmptyCorpus(PathBuf),

    #[error("{path}: row {row}: {msg}")]
    TraceParse {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("trace `{id}`: {msg}")]
    InvalidTrace { id: String, msg: String },

    #[error("invalid video spec: {0}")]
    InvalidVideoSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("split produced an empty {0} set")]
    EmptySplit(&'static str),

    #[error("ladder level {level} out of range (ladder has {len} rungs)")]
    LevelOutOfRange { level: usize, len: usize },

    #[error("chunk must have positive size")]
    EmptyChunk,

    #[error("trace `{0}` delivers no data over a full period; chunk is undeliverable")]
    UndeliverableChunk(String),

    #[error("episode already finished ({0} chunks)")]
    EpisodeFinished(usize),

    #[error("threshold derivation needs at least {need} pairs, got {got}")]
    TooFewPairs { need: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
