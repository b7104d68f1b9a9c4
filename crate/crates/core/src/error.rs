use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("pole: denominator {den:e} vanishes at s = {at}")]
    Pole { at: String, den: f64 },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("scheme is not consistent: sum of alpha = {sum:e}")]
    NotConsistent { sum: f64 },

    #[error("unstable scheme at s = {s}: root modulus {modulus}")]
    UnstableScheme { s: f64, modulus: f64 },

    #[error("no grid point could be evaluated ({failures} failures)")]
    AllPointsFailed { failures: usize },

    #[error("parameters infeasible at s = {s}: root modulus {modulus}")]
    Infeasible { s: f64, modulus: f64 },

    #[error("no feasible initial parameters after {attempts} draws")]
    NoFeasibleInit { attempts: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations; residuals {residuals:?}")]
    NewtonDivergence { iterations: usize, residuals: Vec<f64> },

    #[error("trace too short to estimate a convergence factor ({0} usable iterations)")]
    InsufficientTrace(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
