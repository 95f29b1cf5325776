use rand::Rng;
use rand_distr::StandardNormal;

use super::{Likelihood, SvError, SvParams};
use crate::data::ArSign;
use crate::linalg::Tridiagonal;

/// Log variances are clamped to `[−B, B]`; every clamp is counted.
pub const LOG_VARIANCE_BOUND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PathDraw {
    /// `h_0..h_T`.
    pub h: Vec<f64>,
    pub clamped: usize,
}

/// Exact draw of `(h_0, …, h_T)` from its Gaussian full conditional.
///
/// The precision combines the AR(1) prior with stationary initial state
/// `h_0 ~ N(μ, σ²/(1−φ²))` and, for `t ≥ 1`, the mixture-component
/// likelihood `z_t − m_{s_t} ~ N(h_t, v_{s_t})`. It is tridiagonal, so the
/// draw is a bidiagonal Cholesky solve in O(T).
pub fn sample_h_path<R: Rng + ?Sized>(
    lik: Likelihood<'_>,
    params: &SvParams,
    sign: ArSign,
    rng: &mut R,
) -> Result<PathDraw, SvError> {
    params.check()?;
    let n_obs = lik.n_obs();
    if n_obs == 0 {
        return Err(SvError::new("latent path needs at least one observation", None));
    }
    let n = n_obs + 1;
    let a = params.ar_coefficient(sign);
    let prec = 1.0 / (params.sigma * params.sigma);
    let mu = params.mu;

    // Prior precision (1/σ²)·tridiag(−a; 1, 1+a², …, 1+a², 1), and Q·(μ·1).
    let mut diag = vec![(1.0 + a * a) * prec; n];
    diag[0] = prec;
    diag[n - 1] = prec;
    let off = vec![-a * prec; n - 1];
    let mut linear = vec![mu * (1.0 - a) * (1.0 - a) * prec; n];
    linear[0] = mu * (1.0 - a) * prec;
    linear[n - 1] = mu * (1.0 - a) * prec;

    if let Likelihood::Mixture { z, indicators, table } = lik {
        if indicators.len() != n_obs {
            return Err(SvError::new("indicator count differs from observation count", None));
        }
        for t in 0..n_obs {
            let k = indicators[t];
            let v = table.variances()[k];
            diag[t + 1] += 1.0 / v;
            linear[t + 1] += (z[t] - table.means()[k]) / v;
        }
    }

    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tridiagonal { diag, off }.sample_into(&mut linear, &noise).map_err(|e| {
        SvError::new(format!("path precision not positive definite for {params:?}"), Some(e.0))
    })?;

    let mut clamped = 0;
    for (t, h) in linear.iter_mut().enumerate() {
        if !h.is_finite() {
            return Err(SvError::new(format!("non-finite log variance for {params:?}"), Some(t)));
        }
        if h.abs() > LOG_VARIANCE_BOUND {
            *h = h.clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND);
            clamped += 1;
        }
    }
    Ok(PathDraw { h: linear, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::sv::MixtureTable;

    #[test]
    fn vanishing_sigma_collapses_to_level() {
        let table = MixtureTable::ten_component();
        let z = vec![3.0, -4.0, 1.0, 0.0, 2.0];
        let s = vec![0, 9, 4, 3, 2];
        let p = SvParams::new(-1.3, 0.7, 1e-7).unwrap();
        let mut rng = substream(1, 0, 0);
        let d = sample_h_path(Likelihood::Mixture { z: &z, indicators: &s, table: &table }, &p, ArSign::Plus, &mut rng)
            .unwrap();
        assert_eq!(d.h.len(), 6);
        let dev = d.h.iter().map(|h| (h + 1.3).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-5, "max deviation {dev}");
    }

    #[test]
    fn zero_persistence_decouples_neighbours() {
        let table = MixtureTable::ten_component();
        let z = vec![0.5, -2.0, 1.0];
        let s = vec![3, 5, 2];
        let p = SvParams::new(0.2, 0.0, 0.8).unwrap();
        let n = 100_000;
        let mut rng = substream(2, 0, 0);
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let d = sample_h_path(Likelihood::Mixture { z: &z, indicators: &s, table: &table }, &p, ArSign::Plus, &mut rng)
                .unwrap();
            draws.push((d.h[1], d.h[2]));
        }
        let corr = |xs: &[(f64, f64)]| {
            let k = xs.len() as f64;
            let (ma, mb) = (xs.iter().map(|v| v.0).sum::<f64>() / k, xs.iter().map(|v| v.1).sum::<f64>() / k);
            let cov = xs.iter().map(|v| (v.0 - ma) * (v.1 - mb)).sum::<f64>() / k;
            let va = xs.iter().map(|v| (v.0 - ma).powi(2)).sum::<f64>() / k;
            let vb = xs.iter().map(|v| (v.1 - mb).powi(2)).sum::<f64>() / k;
            cov / (va * vb).sqrt()
        };
        let se = 1.0 / (n as f64).sqrt();
        assert!(corr(&draws).abs() < 3.0 * se, "within-draw corr {}", corr(&draws));
        let lagged: Vec<(f64, f64)> = draws.windows(2).map(|w| (w[0].0, w[1].0)).collect();
        assert!(corr(&lagged).abs() < 3.0 * se, "across-sweep corr {}", corr(&lagged));
    }

    #[test]
    fn prior_only_path_has_stationary_marginals() {
        let p = SvParams::new(-2.0, 0.9, 0.4).unwrap();
        let n = 40_000;
        let mut rng = substream(3, 0, 0);
        let (mut s0, mut s00, mut s5, mut s55) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = sample_h_path(Likelihood::Off { n_obs: 5 }, &p, ArSign::Plus, &mut rng).unwrap();
            s0 += d.h[0];
            s00 += d.h[0] * d.h[0];
            s5 += d.h[5];
            s55 += d.h[5] * d.h[5];
        }
        let var = 0.16 / (1.0 - 0.81);
        for (s, ss) in [(s0, s00), (s5, s55)] {
            let m = s / n as f64;
            let v = ss / n as f64 - m * m;
            assert!((m + 2.0).abs() < 3.0 * (var / n as f64).sqrt(), "mean {m}");
            assert!((v / var - 1.0).abs() < 0.05, "var {v} vs {var}");
        }
    }

    #[test]
    fn minus_sign_flips_the_ar_coefficient() {
        // With the literal recursion, neighbouring states are negatively
        // correlated under the prior.
        let p = SvParams::new(0.0, 0.8, 0.5).unwrap();
        let mut rng = substream(4, 0, 0);
        let mut acc = 0.0;
        for _ in 0..20_000 {
            let d = sample_h_path(Likelihood::Off { n_obs: 2 }, &p, ArSign::Minus, &mut rng).unwrap();
            acc += d.h[1] * d.h[2];
        }
        let cov = acc / 20_000.0;
        let expect = -0.8 * 0.25 / (1.0 - 0.64);
        assert!((cov - expect).abs() < 0.05, "{cov} vs {expect}");
    }

    #[test]
    fn extreme_data_is_clamped_and_counted() {
        let table = MixtureTable::ten_component();
        let z = vec![-400.0; 4];
        let s = vec![4; 4];
        let p = SvParams::new(0.0, 0.5, 3.0).unwrap();
        let mut rng = substream(6, 0, 0);
        let d = sample_h_path(Likelihood::Mixture { z: &z, indicators: &s, table: &table }, &p, ArSign::Plus, &mut rng)
            .unwrap();
        assert!(d.clamped > 0);
        assert!(d.h.iter().all(|h| h.abs() <= LOG_VARIANCE_BOUND));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = SvParams { mu: 0.0, phi: 1.0, sigma: 0.3 };
        let mut rng = substream(7, 0, 0);
        assert!(sample_h_path(Likelihood::Off { n_obs: 3 }, &p, ArSign::Plus, &mut rng).is_err());
    }
}
