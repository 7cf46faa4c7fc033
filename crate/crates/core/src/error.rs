use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("degenerate object")]
    DegenerateObject,

    #[error("unknown component {0}")]
    UnknownComponent(usize),

    #[error("unknown partition {0}")]
    UnknownPartition(usize),

    #[error("empty chart")]
    EmptyChart,

    #[error("chart {0} has no token")]
    Untokenized(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("archive line {line}: {message}")]
    Archive { line: usize, message: String },

    #[error("unsupported archive version {0}")]
    ArchiveVersion(u64),

    #[error("cycle detected through nodes {0:?}")]
    Cycle(Vec<usize>),

    #[error("depth {depth} exceeds maximum {max}")]
    DepthExceeded { depth: usize, max: usize },

    #[error("training bank needs at least one positive and one negative candidate")]
    UnbalancedBank,

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("invalid assembly spec: {0}")]
    InvalidSpec(String),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 config, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Invariant(_) | Error::Cycle(_) | Error::DepthExceeded { .. } => 3,
            _ => 2,
        }
    }
}
