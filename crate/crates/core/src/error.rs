use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Hardy violation: lambda = {lambda} must exceed -(N-2)^2/4 = {bound}")]
    HardyViolation { lambda: f64, bound: f64 },
    #[error("dimension too small: N = {n} must exceed 2s = {two_s}")]
    DimensionTooSmall { n: u32, two_s: u32 },
    #[error("range violation: {inequality}")]
    RangeViolation { inequality: String },
    #[error("condition (cnd) violated: {quantity} must be positive")]
    CndViolation { quantity: String },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("alpha = {alpha} outside (0, N = {n})")]
    AlphaOutOfRange { alpha: f64, n: u32 },
    #[error("factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("invalid radius: {0}")]
    InvalidRadius(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("degenerate iterate: {0}")]
    Degenerate(String),
    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("trajectory has no blow-up verdict")]
    NoBlowupVerdict,
    #[error("degenerate ODI fit: c_lower = {0}")]
    DegenerateFit(f64),
    #[error("file format: {0}")]
    FileFormat(String),
    #[error("rescale failure: {0}")]
    RescaleFailure(String),
    #[error("evolution refused: {0}")]
    EvolutionRestricted(String),
}

pub type Result<T> = std::result::Result<T, Error>;
