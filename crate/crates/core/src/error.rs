use thiserror::Error;

/// Failures raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} did not converge: estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    NonConvergence { what: &'static str, estimate: f64, tolerance: f64 },
    #[error("matrix is numerically singular at pivot {index}")]
    SingularMatrix { index: usize },
    #[error("identity {name} violated: residual {residual:e} > {tolerance:e}")]
    IdentityViolation { name: String, residual: f64, tolerance: f64 },
    #[error("R_n = {value:e} is too close to 0 or 1 (guard {guard:e})")]
    PoleProximity { value: f64, guard: f64 },
    #[error("ODE step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("tail estimate {estimate:e} exceeds {budget:e}")]
    TailEstimateTooLarge { estimate: f64, budget: f64 },
    #[error("denominator vanishes at N = {n}")]
    DenominatorVanishes { n: usize },
    #[error("no real root for H at N = {n}")]
    NoRealRoot { n: usize },
    #[error("ambiguous root at N = {n}: candidates {roots:?}, predictor {predictor}")]
    AmbiguousRoot { n: usize, roots: Vec<f64>, predictor: f64 },
    #[error("outage estimate {value} lies outside [0, 1]")]
    InversionOutOfRange { value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
