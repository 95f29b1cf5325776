//! Bayesian factor stochastic volatility.
//!
//! `m` return series load on `r` latent factors; factor and idiosyncratic
//! log variances follow independent AR(1) processes. The crate fits the
//! model by Gibbs sampling with auxiliary mixtures and interweaving, and
//! turns posterior draws into time-varying covariance, correlation,
//! communality, VaR and CoVaR summaries.

// NaN must fail the range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod sv;
pub mod factor;
pub mod mcmc;
pub mod risk;
pub mod sim;

pub use error::{Error, Result, Violation, ViolationCode};
