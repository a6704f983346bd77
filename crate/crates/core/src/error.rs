use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("i/o error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("too many malformed lines: {malformed} of {total}")]
    TooManyMalformed { malformed: usize, total: usize },

    #[error("corpus contains no events")]
    EmptyCorpus,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown community `{0}`")]
    UnknownCommunity(String),

    #[error("community `{community}` has {members} members, {required} required")]
    InsufficientMembers {
        community: String,
        members: usize,
        required: usize,
    },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate split after {0} attempts")]
    DegenerateSplit(usize),

    #[error("infeasible synthetic plan: {0}")]
    Config(String),

    #[error("index cache: {0}")]
    Cache(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
