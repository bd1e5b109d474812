use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Coordinates or parameters outside their valid domain.
    #[error("invalid input: {0}")]
    InputDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tree is empty")]
    EmptyTree,

    #[error("leaf ids have not been assigned since the last insertion")]
    LeafIdsUnassigned,

    #[error("unknown leaf id {id} (tree has {leaf_count} leaves)")]
    UnknownLeaf { id: u32, leaf_count: usize },

    #[error("no usable rows in {0}")]
    NoUsableRows(PathBuf),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("training data: {0}")]
    Training(String),

    #[error("workload generation: {0}")]
    Workload(String),

    #[error("stale artifact: {0}")]
    Fingerprint(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("result mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
