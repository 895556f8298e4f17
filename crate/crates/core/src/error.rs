use thiserror::Error;

/// Errors surfaced by model construction, discretization and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid operator/parameter combination: {0}")]
    InvalidKind(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grid misconfigured: {0}")]
    BadGrid(String),

    #[error("special function domain: {0}")]
    SpecialFunctionDomain(String),

    #[error("singular or ill-conditioned factorization: {0}")]
    SingularFactorization(String),

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("boundary condition setup: {0}")]
    BoundaryCondition(String),

    #[error("norm specification: {0}")]
    BadNormSpec(String),

    #[error("symbol evaluation: {0}")]
    SymbolEval(String),

    #[error("transform precondition: {0}")]
    TransformPrecondition(String),

    #[error("kernel tuning: {0}")]
    KernelTuning(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
