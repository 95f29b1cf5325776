//! Static-parameter updates for one log-variance process, with
//! ancillarity–sufficiency interweaving.
//!
//! The centered move works on `h` directly:
//! * `φ` by independence Metropolis–Hastings, proposing from the Gaussian
//!   kernel of the transitions `t = 1..T` and correcting for the beta prior
//!   and the stationary law of `h_0`;
//! * `σ²` by Metropolis–Hastings with the inverse-gamma kernel of the
//!   transitions, correcting for the gamma prior;
//! * `μ` from its conjugate Gaussian conditional.
//!
//! The noncentered move rewrites `h_t = μ + σ h̃_t` and redraws `(μ, σ)`
//! given `h̃` from the linearized observations. With a `Gamma(1/2, β)`
//! prior on `σ²`, `±σ ~ N(0, 1/(2β))`, so this is a Gaussian linear
//! regression. The sign of `σ` is folded into `h̃`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Likelihood, SvError, SvParams};
use crate::data::{ArSign, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamUpdate {
    pub params: SvParams,
    pub phi_accepted: bool,
    pub sigma_accepted: bool,
}

fn log_phi_prior(phi: f64, prior: &PriorConfig) -> f64 {
    (prior.phi_a - 1.0) * (0.5 * (1.0 + phi)).ln() + (prior.phi_b - 1.0) * (0.5 * (1.0 - phi)).ln()
}

/// `log N(x0; 0, σ²/(1−φ²))` up to a constant in `φ`.
fn log_initial_state(x0: f64, phi: f64, sigma2: f64) -> f64 {
    let one_minus = 1.0 - phi * phi;
    0.5 * one_minus.ln() - 0.5 * one_minus * x0 * x0 / sigma2
}

fn log_sigma2_prior(s2: f64, prior: &PriorConfig) -> f64 {
    (prior.sigma2_shape - 1.0) * s2.ln() - prior.sigma2_rate * s2
}

/// One interweaved update of `(μ, φ, σ)`.
///
/// `h` (length `T + 1`) is updated in place by the noncentered move. The
/// noncentered move runs only when observations are supplied; with
/// [`Likelihood::Off`] the update targets `p(μ, φ, σ | h)` and leaves `h`
/// untouched. With `fix_mu_zero` the level stays exactly 0.
#[allow(clippy::too_many_arguments)]
pub fn sample_params<R: Rng + ?Sized>(
    h: &mut [f64],
    lik: Likelihood<'_>,
    current: &SvParams,
    prior: &PriorConfig,
    fix_mu_zero: bool,
    sign: ArSign,
    rng: &mut R,
) -> Result<ParamUpdate, SvError> {
    current.check()?;
    let n_obs = h.len().checked_sub(1).filter(|&t| t >= 2).ok_or_else(|| {
        SvError::new(format!("parameter update needs at least 3 latent states, got {}", h.len()), None)
    })?;
    if lik.n_obs() != n_obs {
        return Err(SvError::new("latent path and observations differ in length", None));
    }
    if let Some(t) = h.iter().position(|v| !v.is_finite()) {
        return Err(SvError::new("non-finite latent state", Some(t)));
    }
    let s = sign.factor();
    let mut mu = if fix_mu_zero { 0.0 } else { current.mu };
    let mut phi = current.phi;
    let mut sigma2 = current.sigma * current.sigma;

    // φ | μ, σ, h
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 1..=n_obs {
        let (prev, cur) = (h[t - 1] - mu, h[t] - mu);
        sxx += prev * prev;
        sxy += prev * cur;
    }
    let mut phi_accepted = false;
    if sxx > 0.0 {
        let a_hat = sxy / sxx;
        let a_prop = a_hat + (sigma2 / sxx).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let phi_prop = s * a_prop;
        if phi_prop.abs() < 1.0 {
            let x0 = h[0] - mu;
            let log_ratio = log_phi_prior(phi_prop, prior) + log_initial_state(x0, phi_prop, sigma2)
                - log_phi_prior(phi, prior)
                - log_initial_state(x0, phi, sigma2);
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                phi = phi_prop;
                phi_accepted = true;
            }
        }
    }
    let a = s * phi;

    // σ² | μ, φ, h: propose IG((T−1)/2, S/2), the transition kernel in σ².
    let x0 = h[0] - mu;
    let mut ss = (1.0 - phi * phi) * x0 * x0;
    for t in 1..=n_obs {
        let e = (h[t] - mu) - a * (h[t - 1] - mu);
        ss += e * e;
    }
    let mut sigma_accepted = false;
    if ss > 0.0 {
        let shape = 0.5 * (n_obs as f64 - 1.0);
        let g = Gamma::new(shape, 1.0).map_err(|e| SvError::new(e.to_string(), None))?.sample(rng);
        let s2_prop = 0.5 * ss / g;
        if s2_prop.is_finite() && s2_prop > 0.0 {
            let log_ratio = log_sigma2_prior(s2_prop, prior) - log_sigma2_prior(sigma2, prior);
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                sigma2 = s2_prop;
                sigma_accepted = true;
            }
        }
    }

    // μ | φ, σ, h
    if !fix_mu_zero {
        let init_prec = (1.0 - phi * phi) / sigma2;
        let mut prec = init_prec + 1.0 / prior.mu_var;
        let mut lin = init_prec * h[0] + prior.mu_mean / prior.mu_var;
        let w = (1.0 - a) / sigma2;
        let mut acc = 0.0;
        for t in 1..=n_obs {
            acc += h[t] - a * h[t - 1];
        }
        prec += n_obs as f64 * (1.0 - a) * w;
        lin += w * acc;
        mu = lin / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
    }

    let mut sigma = sigma2.sqrt();
    if let Likelihood::Mixture { z, indicators, table } = lik {
        noncentered_move(h, z, indicators, table, &mut mu, &mut sigma, prior, fix_mu_zero, rng);
    }

    let params = SvParams { mu, phi, sigma };
    params.check()?;
    Ok(ParamUpdate { params, phi_accepted, sigma_accepted })
}

#[allow(clippy::too_many_arguments)]
fn noncentered_move<R: Rng + ?Sized>(
    h: &mut [f64],
    z: &[f64],
    indicators: &[usize],
    table: &super::MixtureTable,
    mu: &mut f64,
    sigma: &mut f64,
    prior: &PriorConfig,
    fix_mu_zero: bool,
    rng: &mut R,
) {
    // The Gaussian ±σ representation exists only for a shape-1/2 gamma prior.
    let sigma_gaussian = (prior.sigma2_shape - 0.5).abs() < 1e-12;
    if !sigma_gaussian && fix_mu_zero {
        return;
    }
    let (mu0, sigma0) = (*mu, *sigma);
    let tilde: Vec<f64> = h.iter().map(|v| (v - mu0) / sigma0).collect();

    // Sufficient statistics of z_t − m_{s_t} = μ + σ h̃_t + N(0, v_{s_t}).
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..z.len() {
        let k = indicators[t];
        let w = 1.0 / table.variances()[k];
        let y = z[t] - table.means()[k];
        let x = tilde[t + 1];
        sw += w;
        swx += w * x;
        swxx += w * x * x;
        swy += w * y;
        swxy += w * x * y;
    }

    let (new_mu, new_sigma) = if !sigma_gaussian {
        // μ alone given σ h̃.
        let prec = 1.0 / prior.mu_var + sw;
        let lin = prior.mu_mean / prior.mu_var + swy - sigma0 * swx;
        (lin / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt(), sigma0)
    } else if fix_mu_zero {
        let prec = 2.0 * prior.sigma2_rate + swxx;
        (0.0, swxy / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt())
    } else {
        let mut p = [1.0 / prior.mu_var + sw, swx, swx, 2.0 * prior.sigma2_rate + swxx];
        let mut b = [prior.mu_mean / prior.mu_var + swy, swxy];
        match crate::linalg::draw_from_precision(&mut p, &mut b, 2, rng) {
            Ok(()) => (b[0], b[1]),
            Err(_) => return,
        }
    };
    if !(new_sigma.is_finite() && new_sigma != 0.0 && new_mu.is_finite()) {
        return;
    }
    *mu = new_mu;
    *sigma = new_sigma.abs();
    for (v, x) in h.iter_mut().zip(&tilde) {
        *v = new_mu + new_sigma * x;
    }
}
