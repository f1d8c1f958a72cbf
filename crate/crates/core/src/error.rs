use thiserror::Error;

/// Errors raised by the solver pipeline.
///
/// Outcomes that are legitimate answers to the question being asked (a
/// system that is not stabilizable, a problem that is not solvable) are
/// reported through outcome enums, not through this type.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix equation N X = L has no solution (range defect {defect:.3e})")]
    NoSolution { defect: f64 },

    #[error("Lyapunov equation unsolvable: {0}")]
    LyapunovUnsolvable(String),

    #[error("invalid terminal value: {0}")]
    InvalidTerminal(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("system is not L2-stabilizable")]
    NotStabilizable,

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("value undefined: range condition fails with defect {defect:.3e}")]
    ValueUndefined { defect: f64 },

    #[error("simulation budget exceeded: {requested} steps requested, budget {budget}")]
    Budget { requested: u64, budget: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
