//! Optimal observation-time designs and simultaneous confidence bands for
//! comparing two regression curves observed with correlated errors.
//!
//! Two groups share observation times on an interval [a, b]; errors are
//! correlated within each group (Brownian motion, or any Gaussian Markov
//! kernel via a time change) and between the groups (a 2 x 2 covariance
//! with correlation rho). The crate provides:
//!
//! - [`model`]: composite two-group regression models built from a
//!   closed-form basis catalog ([`catalog`]);
//! - [`kernel`]: the between-group covariance, Markov kernels, and the
//!   transform to Brownian time;
//! - [`blue`]: the continuous-observation best linear unbiased estimator,
//!   its information matrix, per-group marginal estimation and the
//!   precision gain of joint estimation;
//! - [`discrete`]: the n-point estimator with optimal weight matrices;
//! - [`design`]: the band-variance criterion and particle-swarm
//!   optimization of the observation times;
//! - [`simulate`]: path sampling, parametric critical values and
//!   simultaneous confidence bands for the difference of the two curves.
//!
//! All computations are deterministic for a fixed master seed, independent
//! of thread count.

pub mod blue;
pub mod catalog;
pub mod design;
pub mod discrete;
pub mod error;
pub mod kernel;
mod linalg;
pub mod model;
pub mod quadrature;
mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{CompositeModel, CurveBasis, Group, ModelStructure};
