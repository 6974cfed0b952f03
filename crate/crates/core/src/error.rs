use thiserror::Error;

use crate::lattice::SpinConfiguration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration of 2^{n} states exceeds the limit of 2^{max}")]
    EnumerationTooLarge { n: usize, max: usize },

    #[error("site index {index} out of range for system size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("exchange requires two distinct sites, got ({i}, {j})")]
    InvalidExchange { i: usize, j: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("evaluation failure at operation {op_index} ({op})")]
    EvaluationFailure { op_index: usize, op: &'static str },

    #[error("log-probability evaluation failed for configuration {config}: {source}")]
    Evaluator {
        config: SpinConfiguration,
        #[source]
        source: Box<Error>,
    },

    #[error("amplitude underflows to zero for configuration {config}")]
    AmplitudeUnderflow { config: SpinConfiguration },

    #[error("local energy overflow for pair ({x} -> {x_prime})")]
    LocalEnergyOverflow {
        x: SpinConfiguration,
        x_prime: SpinConfiguration,
    },

    #[error("probability vector does not sum to one (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("kernel is reducible: state {unreachable} is not reachable")]
    ReducibleKernel { unreachable: usize },

    #[error("kernel is not reversible (max detailed-balance violation {violation:e})")]
    NotReversible { violation: f64 },

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("singular linear system (smallest eigenvalue {min_eigenvalue:e})")]
    SingularSystem { min_eigenvalue: f64 },

    #[error("non-finite result: {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("sample size {n} outside the supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("training failed at step {step}: {source}")]
    TrainStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is numerical rather than a usage or input error.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EvaluationFailure { .. }
            | Error::LocalEnergyOverflow { .. }
            | Error::NotNormalized { .. }
            | Error::ReducibleKernel { .. }
            | Error::NotReversible { .. }
            | Error::EigenNonConvergence
            | Error::SingularSystem { .. }
            | Error::NonFinite(_)
            | Error::AmplitudeUnderflow { .. } => true,
            Error::Evaluator { source, .. } | Error::TrainStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
