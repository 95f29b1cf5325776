//! Univariate stochastic volatility machinery.
//!
//! Each idiosyncratic series and each factor carries a latent AR(1)
//! log-variance process. The observation equation `e_t = exp(h_t / 2) ε_t`
//! is linearized to `log e_t² = h_t + log ε_t²` and the `log χ²(1)` error is
//! replaced by a ten-component Gaussian mixture, which makes the path
//! conditionally Gaussian with a tridiagonal precision.

mod mixture;
mod params;
mod path;

pub use mixture::{default_offset, linearize, sample_indicators, LinearizedObs, MixtureTable};
pub use params::{sample_params, ParamUpdate};
pub use path::{sample_h_path, PathDraw, LOG_VARIANCE_BOUND};

use crate::data::ArSign;

/// Static parameters of one latent log-variance process.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl SvParams {
    pub fn new(mu: f64, phi: f64, sigma: f64) -> Result<Self, SvError> {
        let p = SvParams { mu, phi, sigma };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), SvError> {
        if !(self.phi.abs() < 1.0) || !(self.sigma > 0.0 && self.sigma.is_finite()) || !self.mu.is_finite() {
            return Err(SvError::new(format!("invalid parameters {self:?}"), None));
        }
        Ok(())
    }

    /// AR(1) coefficient actually applied to `h_{t−1} − μ`.
    pub fn ar_coefficient(&self, sign: ArSign) -> f64 {
        sign.factor() * self.phi
    }
}

/// What the latent path is conditioned on.
#[derive(Debug, Clone, Copy)]
pub enum Likelihood<'a> {
    /// Linearized observations with their mixture indicators.
    Mixture { z: &'a [f64], indicators: &'a [usize], table: &'a MixtureTable },
    /// No data: the AR(1) prior alone. Used to check prior invariance.
    Off { n_obs: usize },
}

impl Likelihood<'_> {
    pub fn n_obs(&self) -> usize {
        match self {
            Likelihood::Mixture { z, .. } => z.len(),
            Likelihood::Off { n_obs } => *n_obs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{detail}{}", .t.map(|t| format!(" (t = {t})")).unwrap_or_default())]
pub struct SvError {
    pub detail: String,
    pub t: Option<usize>,
}

impl SvError {
    pub fn new(detail: impl Into<String>, t: Option<usize>) -> Self {
        SvError { detail: detail.into(), t }
    }
}
