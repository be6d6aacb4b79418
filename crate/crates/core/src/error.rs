use std::path::PathBuf;

use crate::types::Metric;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("text is empty after trimming whitespace")]
    EmptyText,

    // backend
    #[error("bundle file missing: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bundle fingerprint mismatch: recorded {recorded}, computed {computed}")]
    FingerprintMismatch { recorded: String, computed: String },
    #[error("malformed bundle config: {0}")]
    MalformedConfig(String),
    #[error("bundle kind is {actual}, operation needs {expected}")]
    WrongBundleKind {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("tokenizer failure: {0}")]
    Tokenizer(String),
    #[error("inference failure: {0}")]
    Inference(String),
    #[error("every token is masked out or special; nothing left to pool or match")]
    AllTokensExcluded,

    // metrics
    #[error("cosine similarity is undefined for a zero or non-finite vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("ensemble is missing its {0} component")]
    MissingComponent(Metric),
    #[error("ensemble inputs belong to different pairs: {0} vs {1}")]
    PairIdMismatch(String, String),

    // stats
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("correlation is undefined for constant input")]
    ConstantInput,
    #[error("class {0} has no scores")]
    EmptyClass(u8),
    #[error("label {0} is not binary")]
    NonBinaryLabel(f64),
    #[error("non-finite value {0} in statistical input")]
    NonFinite(f64),

    // ingest
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("labels for the {split} split of {dataset} are not distributed")]
    WrongSplit { dataset: String, split: String },
    #[error("schema violation in field `{field}`: {msg}")]
    Schema { field: String, msg: String },
    #[error("subset size {n} outside 1..={len}")]
    SubsetRange { n: usize, len: usize },
    #[error("stratified subsets need a binary-labelled dataset")]
    StratifyNonBinary,

    // cache
    #[error("score cache unavailable at {}: {source}", path.display())]
    CacheUnavailable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt cache entry {}", .0.display())]
    CorruptCacheEntry(PathBuf),

    // runs and reports
    #[error("no bundle configured for metric {0}")]
    BundleMissing(Metric),
    #[error("runs cannot be tabulated together: {0}")]
    IncompatibleRuns(String),
    #[error("run directory {} is locked by another writer", .0.display())]
    RunLocked(PathBuf),
    #[error("figure rendering failed: {0}")]
    Render(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
