use thiserror::Error;

/// Errors raised while building designs, evaluating MSE or fitting estimators.
///
/// Subject indices carried in messages are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need an even number of subjects, got {0}")]
    OddSubjectCount(usize),
    #[error("need at least 4 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("duplicate subject id {0:?}")]
    DuplicateId(String),
    #[error("block {block} has odd size {size}; every block must have even size")]
    OddBlock { block: usize, size: usize },
    #[error("partition error: index {0} appears in more than one block")]
    DuplicateIndex(usize),
    #[error("partition error: index {0} is not covered by any block")]
    MissingIndex(usize),
    #[error("index {index} out of range for {n} subjects")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("allocation is unbalanced: entries sum to {0}")]
    UnbalancedAllocation(i64),
    #[error("allocation entry {index} is {value}, expected -1 or +1")]
    InvalidSign { index: usize, value: i64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("cannot split {n_subjects} subjects into {n_blocks} equal blocks of even size")]
    Indivisible { n_subjects: usize, n_blocks: usize },
    #[error("support has {size} allocations, above the cap of {cap}")]
    SupportTooLarge { size: u128, cap: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("R-squared is undefined for a constant vector")]
    ConstantVector,
    #[error("no covariates to match on (d = 0)")]
    NoCovariates,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("vector must be sorted ascending (first violation at index {0})")]
    Unsorted(usize),
    #[error("design matrix is rank deficient (rank {rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("unknown link function {0:?}")]
    UnknownLink(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
