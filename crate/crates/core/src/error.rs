use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by the verification library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0}; only 2 and 3 are supported")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frame is not orthonormal: |e{i}·e{j} - δ| = {deviation:.3e}")]
    NonOrthonormalFrame { i: usize, j: usize, deviation: f64 },

    #[error("Lipschitz audit failed: declared L = {declared}, sampled quotient {observed}")]
    LipschitzViolation { declared: f64, observed: f64 },

    #[error("inner window is not compactly contained in the outer window")]
    WindowNotContained,

    #[error("direction not admissible: |xi - e_n| = {distance:.6} >= eta0 = {radius:.6}")]
    InadmissibleDirection { distance: f64, radius: f64 },

    #[error("direction lies outside the cone |ζ·e_n| > α|ζ| (α = {alpha:.6})")]
    OutsideCone { alpha: f64 },

    #[error("zero vector where a direction was required")]
    ZeroVector,

    #[error("point lies outside the projected graph patch")]
    OutsidePatch,

    #[error("root bracketing failed on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("collar thickness {eps} exceeds the validated maximum {max}")]
    CollarTooThick { eps: f64, max: f64 },

    #[error("point {0:?} lies outside the field domain")]
    OutOfDomain(Vec<f64>),

    #[error("point lies on the interface (signed offset {offset:.3e}); use one-sided operations")]
    OnInterface { offset: f64 },

    #[error("non-finite sample at {0:?}")]
    NonFinite(Vec<f64>),

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("{what} did not converge (residual {residual:.3e}, tolerance {tol:.3e})")]
    NotConverged { what: String, residual: f64, tol: f64 },

    #[error("test function support leaks outside the field domain near {0:?}")]
    SupportLeakage(Vec<f64>),

    #[error("boundary not covered by any chart tile near {0:?} where the test function is nonzero")]
    UncoveredBoundary(Vec<f64>),

    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T> = std::result::Result<T, Error>;
