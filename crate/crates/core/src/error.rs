use thiserror::Error;

use crate::ids::{JobId, ServerId};

pub type Result<T, E = CamrError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CamrError {
    #[error("q must be at least 2 (got {0})")]
    AlphabetTooSmall(usize),
    #[error("k must be at least 2 (got {0})")]
    LengthTooSmall(usize),
    #[error("q^(k-1) = {jobs} jobs exceeds the configured ceiling of {ceiling}")]
    TooManyJobs { jobs: String, ceiling: usize },
    #[error("batch size gamma must be at least 1")]
    GammaZero,
    #[error("job {job} is out of range 1..={jobs}")]
    JobOutOfRange { job: usize, jobs: usize },
    #[error("server {server} is out of range 1..={servers}")]
    ServerOutOfRange { server: usize, servers: usize },
    #[error("subfile {subfile} is out of range 1..={subfiles}")]
    SubfileOutOfRange { subfile: usize, subfiles: usize },
    #[error("servers {a} and {b} both belong to parallel class {class}")]
    SameClass { a: ServerId, b: ServerId, class: usize },
    #[error("server {server} does not own job {job}")]
    NotAnOwner { job: JobId, server: ServerId },
    #[error("servers store unequal amounts of data ({min} vs {max} subfiles)")]
    UnequalStorage { min: usize, max: usize },
    #[error("value width must be at least one byte")]
    ValueWidthZero,
    #[error("value width of {value_bytes} bytes is not divisible by k-1 = {divisor}")]
    ValueWidthIndivisible { value_bytes: usize, divisor: usize },
    #[error("value width of {value_bytes} bytes cannot hold {subfiles} subfiles of up to {max_count} occurrences without wraparound")]
    ValueWidthTooSmall { value_bytes: usize, subfiles: usize, max_count: u64 },
    #[error("aggregation over an empty list of values")]
    EmptyAggregate,
    #[error("cannot aggregate values of (function {left_fn}, job {left_job}) with (function {right_fn}, job {right_job})")]
    MixedAggregate { left_fn: usize, left_job: JobId, right_fn: usize, right_job: JobId },
    #[error("subfile {subfile} of job {job} appears in more than one aggregated value")]
    OverlappingSubfiles { job: JobId, subfile: usize },
    #[error("value of {actual} bytes does not match the configured width of {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("server {server} has no map output for subfile {subfile} of job {job}")]
    MissingLocalValue { server: ServerId, job: JobId, subfile: usize },
    #[error("exchange group needs at least two members (got {0})")]
    GroupTooSmall(usize),
    #[error("exchange group member {0} has no chunk assigned")]
    MissingDemand(ServerId),
    #[error("expected a single jointly owned job for servers {servers:?}, found {found}")]
    NotSingleton { servers: Vec<ServerId>, found: usize },
    #[error("no owner of job {job} in the parallel class of server {server}")]
    ClassMateMissing { job: JobId, server: ServerId },
    #[error("server {receiver} did not receive the transmission from {sender} in stage {stage}")]
    MissingTransmission { stage: u8, sender: ServerId, receiver: ServerId },
    #[error("server {server} cannot reduce job {job}: held subfiles do not partition 1..={subfiles}")]
    IncompleteCoverage { server: ServerId, job: JobId, subfiles: usize },
    #[error("stage {stage} measured load {measured} differs from analytic load {analytic}")]
    LoadMismatch { stage: u8, measured: String, analytic: String },
    #[error("storage fraction mu*K = {0} is not an integer in 1..K-1")]
    InvalidStorageFraction(String),
    #[error("job-count bound chain violated for q={q}, k={k}")]
    BoundViolation { q: usize, k: usize },
    #[error("design invariant violated: {0}")]
    DesignInvariant(String),
}
