use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("deformation parameter q = {q} outside {expected}")]
    QOutOfRange { q: f64, expected: &'static str },

    #[error("truncation size {0} too small (need at least 2)")]
    TruncationTooSmall(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("safe block size {k_safe} must be smaller than the dimension {dim}")]
    SafeBlockTooLarge { k_safe: usize, dim: usize },

    #[error("zero-norm family vector at index {0}")]
    ZeroNorm(usize),

    #[error("operator is singular on the truncation: {0}")]
    Singular(String),

    #[error("invalid deformation: {0}")]
    InvalidDeformation(String),

    #[error("|z| = {modulus} is outside the convergence disc of radius {rho}")]
    OutsideDisc { modulus: f64, rho: f64 },

    #[error("series needs {needed} terms to reach the tail target, only {available} available")]
    SeriesTooShort { needed: usize, available: usize },

    #[error("vector support reaches index {index}, allowed indices are < {limit}")]
    SupportViolation { index: usize, limit: usize },

    #[error("declared norm bound violated at n = {n}: {norm} > {bound}")]
    BoundViolated { n: usize, norm: f64, bound: f64 },

    #[error("non-positive norm sample at index {0}")]
    NonPositiveNorm(usize),

    #[error("need at least {needed} norm samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("moment system with {0} moments is beyond the numerically stable range")]
    Conditioning(usize),

    #[error("angular rule with {n_theta} points cannot resolve index differences up to {spread}")]
    AngularTooCoarse { n_theta: usize, spread: usize },

    #[error("grid function does not decay at the boundary: |f| = {value:e}")]
    SupportEscape { value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
