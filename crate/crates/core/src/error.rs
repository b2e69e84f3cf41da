//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by model construction, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("interval [{a}, {b}] is degenerate or negative (need 0 <= a < b)")]
    InvalidInterval { a: f64, b: f64 },

    #[error("basis `{name}` has dimension zero")]
    EmptyBasis { name: String },

    #[error("basis `{name}` is not finite on the working interval (t = {t})")]
    BasisNotFinite { name: String, t: f64 },

    #[error("rows of the regression matrix are numerically dependent (Gram condition {cond:.3e} >= {limit:.1e})")]
    DependentComponents { cond: f64, limit: f64 },

    #[error("time {t} outside the model interval [{a}, {b}]")]
    OutOfInterval { t: f64, a: f64, b: f64 },

    #[error("correlation must satisfy |rho| < 1, got {rho}")]
    InvalidCorrelation { rho: f64 },

    #[error("standard deviation must be positive, got {value}")]
    InvalidSigma { value: f64 },

    #[error("time points must be positive, got {t}")]
    NonPositiveTime { t: f64 },

    #[error("time points must be strictly increasing")]
    UnsortedPoints,

    #[error("design needs at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },

    #[error("design endpoints ({lo}, {hi}) do not match the interval [{a}, {b}]")]
    EndpointMismatch { lo: f64, hi: f64, a: f64, b: f64 },

    #[error("{what} is numerically singular (condition {cond:.3e})")]
    SingularMatrix { what: String, cond: f64 },

    #[error("interval starts at zero; use the zero-start estimation path")]
    ZeroStart,

    #[error("interval start is {a} > 0; the zero-start path requires a = 0")]
    NonZeroStart { a: f64 },

    #[error("no non-singular 2x2 pivot block in the regression matrix at t = 0")]
    PivotNotFound,

    #[error("kernel shape function q = u/v must be positive and strictly increasing (violated near t = {t})")]
    KernelNotIncreasing { t: f64 },

    #[error("kernel scale function v vanishes near t = {t}")]
    KernelScaleZero { t: f64 },

    #[error("path grid has {n} points; at least {min} required")]
    GridTooCoarse { n: usize, min: usize },

    #[error("expected {expected} observations, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("model structure has no per-group parameter split")]
    NoGroupSplit,

    #[error("alpha must lie in (0, 1), got {alpha}")]
    InvalidAlpha { alpha: f64 },

    #[error("Monte Carlo draw count {draws} below the minimum {min}")]
    TooFewDraws { draws: usize, min: usize },

    #[error("band variance h(t) is zero at t = {t}; the contrast is degenerate there")]
    DegenerateContrast { t: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
