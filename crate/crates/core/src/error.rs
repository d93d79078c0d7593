use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density matrix trace is {trace}, expected 1 (|dev| > {tol:e})")]
    TraceDeviation { trace: f64, tol: f64 },

    #[error("density matrix is not Hermitian: max |rho - rho^dagger| = {residual:e}")]
    NotHermitian { residual: f64 },

    #[error("density matrix has eigenvalue {eigenvalue:e} below the positivity floor")]
    PositivityViolation { eigenvalue: f64 },

    #[error("state is not normalized: norm^2 = {norm_sqr}")]
    NotNormalized { norm_sqr: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Riccati variable diverged at t = {t}: |z| = {norm:e} exceeds guard {guard:e}")]
    RiccatiBlowup { t: f64, norm: f64, guard: f64 },

    #[error("effective Hamiltonian off-diagonal block residue {residue:e} at t = {t}")]
    IntegrationConsistency { t: f64, residue: f64 },

    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("realization {index} (seed {seed:#018x}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
