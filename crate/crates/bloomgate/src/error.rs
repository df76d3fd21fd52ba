//! Crate-wide error type.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite component at position {position}")]
    NonFinite { position: usize },

    #[error("zero-norm vector: cosine distance is undefined for degenerate descriptors")]
    ZeroNorm,

    #[error("hash code width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{distinct} distinct vectors for {k} centroids; need at least one per centroid")]
    TooFewVectors { distinct: usize, k: usize },

    #[error("duplicate record id {id}")]
    DuplicateId { id: u32 },

    #[error("ground truth references unknown id {id}")]
    UnknownId { id: u32 },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("truncated record at byte offset {offset} in {path}")]
    TruncatedRecord { path: PathBuf, offset: u64 },

    #[error("inconsistent dimension in {path}: record {record} has dim {got}, expected {expected}")]
    InconsistentDim {
        path: PathBuf,
        record: usize,
        got: usize,
        expected: usize,
    },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("unsupported version {got} in {path} (supported: {supported})")]
    UnsupportedVersion { path: PathBuf, got: u32, supported: u32 },

    #[error("corrupt file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("manifest {path} missing key `{key}`")]
    MissingManifestKey { path: PathBuf, key: &'static str },

    #[error("ranked list contains duplicate id {id}")]
    DuplicateRankedId { id: u32 },

    #[error("empty relevant set: query must be excluded upstream")]
    EmptyRelevantSet,

    #[error("workload mismatch: baseline ran {baseline} queries, gated ran {gated}")]
    WorkloadMismatch { baseline: usize, gated: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
