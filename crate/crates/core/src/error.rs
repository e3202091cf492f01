use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KondoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate energies: omega_{k} = omega_{l} = {value}")]
    Degenerate { k: usize, l: usize, value: f64 },

    #[error("zero energy at momentum {k}")]
    ZeroEnergy { k: usize },

    #[error("energies not strictly increasing at momentum {k}: {prev} >= {next}")]
    NotMonotone { k: usize, prev: f64, next: f64 },

    #[error("characteristic function evaluated at pole nu = {nu} (omega_{k})")]
    Pole { nu: f64, k: i64 },

    #[error("root bracket ({lo}, {hi}) failed: f(lo) = {flo}, f(hi) = {fhi}")]
    Bracket { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("quadrature did not converge: estimated error {error:e} after {intervals} subintervals")]
    Quadrature { error: f64, intervals: usize },

    #[error("eigensolver did not converge")]
    EigenConvergence,

    #[error("no eigenvalue within {tol:e} of zero (closest {closest:e})")]
    MissingZeroMode { closest: f64, tol: f64 },

    #[error("coupling g must be nonzero")]
    ZeroCoupling,

    #[error("xi = {0} outside (-1/2, 1/2]")]
    XiRange(f64),

    #[error("hermiticity defect {defect:e} exceeds {limit:e} at t = {t}")]
    Hermiticity { defect: f64, limit: f64, t: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },

    #[error("no condensate: J = {j} is below the critical coupling {critical}")]
    SubCritical { j: f64, critical: f64 },
}

pub type Result<T> = std::result::Result<T, KondoError>;
