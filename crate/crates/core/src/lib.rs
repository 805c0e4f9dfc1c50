//! Fast, quadrature-free maximum likelihood for probit mixed models.
//!
//! The marginal likelihood of a probit model with Gaussian random
//! effects involves one intractable integral per group. This crate
//! approximates each integral by expectation propagation: every
//! Bernoulli factor is replaced by an unnormalized Gaussian chosen by
//! moment matching, which for the probit link has a closed form. The
//! resulting approximate log-likelihood is smooth, cheap to evaluate,
//! and is maximized with Nelder-Mead/BFGS using numerical derivatives.
//!
//! Modules:
//! - [`linalg`]: small-matrix kernels (vech, duplication matrices,
//!   Jacobi spectral decomposition, matrix log/exp).
//! - [`special`]: stable Φ, log Φ and inverse-Mills-ratio functions.
//! - [`natparam`]: natural parameters of unnormalized Gaussians and the
//!   closed-form probit tilt projection.
//! - [`ep`]: the per-group message-passing fixed point, its
//!   log-likelihood contribution and best prediction.
//! - [`oracles`]: adaptive Gauss-Hermite quadrature and Laplace
//!   reference engines.
//! - [`params`]: unconstrained covariance reparametrizations.
//! - [`optim`]: Nelder-Mead, BFGS and finite-difference derivatives.
//! - [`mle`]: the two-stage fit driver with confidence intervals.
//! - [`sim`]: simulation studies, coverage experiments, discrepancy
//!   sweeps.
//! - [`report`]: machine-readable report serialization.

pub mod data;
pub mod ep;
pub mod error;
pub mod linalg;
pub mod mle;
pub mod natparam;
pub mod optim;
pub mod oracles;
pub mod params;
pub mod report;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
