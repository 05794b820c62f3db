use thiserror::Error;

/// Failures raised by model construction, operator evaluation and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("generator is not sub-Markovian: {0}")]
    NonSubMarkovian(String),

    #[error("chain is not transient: {0}")]
    NotTransient(String),

    #[error("chain is not irreducible: state {0} cannot reach every other state")]
    NotIrreducible(usize),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("point {0} lies outside the open unit interval")]
    OutOfDomain(f64),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error("validation failed: {0}")]
    ValidationFailed(String),

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("extension failed: {0}")]
    ExtensionFailed(String),

    #[error("complete maximum principle violated: {0}")]
    CounterexampleFound(String),

    #[error("backend mismatch: {0}")]
    BackendMismatch(String),

    #[error("unsupported on this backend: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
