use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node count {n} is outside the supported range 1..={cap}")]
    SizeGuard { n: usize, cap: usize },

    #[error("wrong solver: {0}")]
    WrongSolver(String),

    #[error("profile is outside the energy-constrained regime ({0}); use the LP solver")]
    OutOfRegime(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("rationalization failed: worst residual {residual:e} on {field}")]
    Precision { residual: f64, field: String },

    #[error("burst length undefined: {0}")]
    UndefinedBurst(String),

    #[error("empty report: {0}")]
    EmptyReport(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver failure: {0}")]
    Solver(String),
}
