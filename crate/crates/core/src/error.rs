use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("allocation vector is empty")]
    EmptyAllocations,
    #[error("record index {index} out of range for {n} records")]
    RecordOutOfRange { index: usize, n: usize },
    #[error("invalid target cluster {label} (partition has {k} clusters)")]
    InvalidTarget { label: usize, k: usize },
    #[error("enumeration supports 1 <= n <= {max}, got {n}")]
    EnumerationGuard { n: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("truncation level {m} is below the largest occupied size {max_size}")]
    TruncationTooSmall { m: usize, max_size: usize },
    #[error("rejection sampler gave up after {attempts} attempts")]
    RejectionTimeout { attempts: u64 },
    #[error("no draws supplied")]
    EmptyDraws,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("category {code} has zero mass in field {field}")]
    ZeroThetaMass { field: usize, code: usize },
    #[error("likelihood cache is stale: {0}")]
    StaleCache(String),
    #[error("infeasible moment match: sd^2 = {var} must be below mean(1 - mean) = {max}")]
    InfeasibleMoments { var: f64, max: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace has no allocations")]
    MissingAllocations,
    #[error("empty scenario specification")]
    EmptyScenario,
    #[error("{path}: {message}")]
    Data {
        path: String,
        row: usize,
        message: String,
    },
    #[error("trace parse error at line {line}: {message}")]
    TraceFormat { line: usize, message: String },
    #[error("non-finite log density at the current point")]
    NonFiniteDensity,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
