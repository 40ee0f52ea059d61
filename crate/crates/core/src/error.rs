use thiserror::Error;

/// Errors raised by the simulator and its inference engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("parameter length mismatch: expected {expected}, got {actual}")]
    ParamLength { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),
    #[error("dataset needs at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("cannot remove a point from empty cluster statistics")]
    EmptyStats,
    #[error("restricted scan set contains an anchor index {0}")]
    AnchorInScanSet(usize),
    #[error("anchors {0} and {1} must sit in distinct clusters")]
    AnchorsShareCluster(usize, usize),
    #[error("scan index {0} is in neither anchor cluster")]
    OutsideAnchorClusters(usize),
    #[error("split-merge needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("enumeration too large: {0} points (limit 10)")]
    EnumerationTooLarge(usize),
    #[error("empty cluster {0}")]
    EmptyCluster(usize),
    #[error("cannot aggregate an empty member list")]
    EmptyAggregate,
    #[error("requested {k} clusters for {m} clients")]
    TooManyClusters { k: usize, m: usize },
    #[error("label length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty label vector")]
    EmptyLabels,
    #[error("malformed partition file at line {line}: {msg}")]
    PartitionFile { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
