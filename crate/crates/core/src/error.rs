use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {record} declares dim {found}, expected {expected}")]
    InconsistentDim {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("invalid dimension {0}")]
    InvalidDim(i64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("element type mismatch: {0}")]
    ElemMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("k = {k} exceeds base count {count}")]
    KTooLarge { k: usize, count: usize },

    #[error("row count mismatch: {results} result rows vs {truth} truth rows")]
    RowCountMismatch { results: usize, truth: usize },

    #[error("row {row} has {len} entries, need at least {k}")]
    RowTooShort { row: usize, len: usize, k: usize },

    #[error("m = {m} does not divide dim = {dim}")]
    SubspaceMismatch { m: usize, dim: usize },

    #[error("need at least {needed} training points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("PQ code has {found} bytes, codebook has {expected} subspaces")]
    CodeLength { expected: usize, found: usize },

    #[error("node payload of {payload} bytes does not fit a {page}-byte page")]
    PageOverflow { payload: usize, page: usize },

    #[error("bad index magic")]
    BadMagic,

    #[error("unsupported index version {0}")]
    BadVersion(u32),

    #[error("corrupt index: {0}")]
    Corrupt(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("node {node} out of range (count {count})")]
    NodeOutOfRange { node: u32, count: usize },

    #[error("backend closed")]
    BackendClosed,

    #[error("backend has not served any request")]
    NoTraffic,

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("stale wait: worker {worker} awaited epoch {awaited}, outstanding epoch is {outstanding}")]
    StaleEpoch {
        worker: usize,
        awaited: u64,
        outstanding: u64,
    },

    #[error("completion for worker {worker} epoch {epoch} was poisoned by a backend failure")]
    PoisonedCompletion { worker: usize, epoch: u64 },

    #[error("need at least 2 degree profiles, got {0}")]
    TooFewProfiles(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("query failed: {0}")]
    QueryFailed(String),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
