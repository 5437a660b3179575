use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("boundary projection undefined at the origin")]
    UndefinedProjection,
    #[error("kernel near-singularity: |1 - <z,w>| = {0:e}")]
    NearSingularKernel(f64),
    #[error("point outside the boundary collar (1 - |z| = {0})")]
    OutsideCollar(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dyadic construction failed: {0}")]
    Construction(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid corona threshold R = {0} (must exceed 1)")]
    InvalidThreshold(f64),
    #[error("reverse Hoelder violation: <w^r>^(1/r) exceeds {c0} <w> already at r = {r}")]
    ReverseHolderViolation { c0: f64, r: f64 },
    #[error("weight rejected: {0}")]
    WeightRejected(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("domination violation at z = {z}: support 0, numerator {numerator:e}")]
    DominationViolation { z: String, numerator: f64 },
    #[error("cache error: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
