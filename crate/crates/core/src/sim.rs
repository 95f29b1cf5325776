//! Synthetic panels drawn from known factor SV parameters.
//!
//! Three fixtures ship with the crate. All of them live on a unit return
//! scale (idiosyncratic levels near `e^{-1}`, loadings of order one, factor
//! levels fixed at zero) and use persistent log variances:
//!
//! | name          | m  | r | T    | seed |
//! |---------------|----|---|------|------|
//! | `tiny`        | 3  | 1 | 200  | 11   |
//! | `paper-shape` | 12 | 4 | 425  | 12   |
//! | `recovery`    | 6  | 2 | 1000 | 13   |
//!
//! `tiny`: Λ = (1.0, 0.8, 0.6)', μ = (−1.0, −0.5, −1.5),
//! φ = (0.90, 0.95, 0.85 | 0.95), σ = (0.20, 0.15, 0.25 | 0.20).
//!
//! `paper-shape`: factor `j` loads 0.9, 0.8, 0.7 on series `3j..3j+3` and
//! 0.15 on every other series; μ_i = −1.0, −0.7, −1.3 cycling; φ_i cycles
//! through 0.90, 0.95, 0.97 and φ of the factors is 0.95; σ_i cycles through
//! 0.20, 0.15, 0.10 and σ of the factors is 0.20.
//!
//! `recovery`: Λ columns (1.0, 0.8, 0.6, 0.3, 0.2, 0.1)' and
//! (0.1, 0.3, 0.5, 0.9, 0.7, 1.0)', μ = (−1.0, −0.8, −1.2, −0.6, −1.4, −1.0),
//! φ = (0.95, 0.90, 0.93, 0.85, 0.97, 0.90 | 0.95, 0.90),
//! σ = (0.20, 0.25, 0.15, 0.30, 0.10, 0.20 | 0.20, 0.25).

use std::io::{Read, Write};

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ArSign, LatentPaths, ParameterDraw, PricePanel, ReturnPanel};
use crate::error::{Error, Result, Violation, ViolationCode};
use crate::rng::substream;

pub const FIXTURES: [&str; 3] = ["tiny", "paper-shape", "recovery"];

/// Generating parameters. Unlike a posterior draw, `sigma = 0` is allowed
/// and produces a constant log-variance path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub params: ParameterDraw,
    pub n_obs: usize,
    pub seed: u64,
    #[serde(default)]
    pub ar_sign: ArSign,
}

impl TrueParams {
    pub fn violations(&self) -> Vec<Violation> {
        let p = &self.params;
        let (m, r) = p.loadings.shape();
        let bad = |msg: String| Violation::new(ViolationCode::ShapeMismatch, msg);
        let mut out = Vec::new();
        if m == 0 {
            out.push(Violation::new(ViolationCode::SeriesCount, "at least one series is required"));
        }
        if p.mu.len() != m + r || p.phi.len() != m + r || p.sigma.len() != m + r {
            out.push(bad(format!("parameter vectors must have length {}", m + r)));
            return out;
        }
        if self.n_obs < 2 {
            out.push(Violation::new(ViolationCode::TooFewObservations, "at least 2 observations are required"));
        }
        for k in 0..m + r {
            if !(p.phi[k].abs() < 1.0) {
                out.push(Violation::new(ViolationCode::PriorParameter, format!("phi[{k}] = {} not in (-1, 1)", p.phi[k])));
            }
            if !(p.sigma[k] >= 0.0 && p.sigma[k].is_finite()) {
                out.push(Violation::new(ViolationCode::PriorParameter, format!("sigma[{k}] = {} negative", p.sigma[k])));
            }
            if !p.mu[k].is_finite() {
                out.push(Violation::new(ViolationCode::NonFiniteValue, format!("mu[{k}] not finite")));
            }
        }
        for j in 0..r {
            if p.mu[m + j] != 0.0 {
                out.push(Violation::new(ViolationCode::PriorParameter, format!("factor level mu[{}] must be 0", m + j)));
            }
        }
        if p.loadings.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(ViolationCode::NonFiniteValue, "non-finite loading"));
        }
        out
    }
}

/// Draws `h_0` from the stationary law, iterates the AR(1) recursion,
/// then `f_t ~ N(0, V_t)` and `y_t = Λ f_t + ε_t`, `ε_t ~ N(0, U_t)`.
///
/// The returned panel is not demeaned.
pub fn simulate_panel(truth: &TrueParams) -> Result<(ReturnPanel, LatentPaths)> {
    let bad = truth.violations();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let p = &truth.params;
    let (m, r) = p.loadings.shape();
    let n = truth.n_obs;
    let sign = truth.ar_sign.factor();
    let mut h = Vec::with_capacity(m + r);
    for k in 0..m + r {
        let mut rng = substream(truth.seed, 0, k as u64);
        let a = sign * p.phi[k];
        let mut path = Vec::with_capacity(n + 1);
        let sd0 = p.sigma[k] / (1.0 - a * a).sqrt();
        path.push(p.mu[k] + sd0 * rng.sample::<f64, _>(StandardNormal));
        for t in 1..=n {
            let eta: f64 = rng.sample(StandardNormal);
            path.push(p.mu[k] + a * (path[t - 1] - p.mu[k]) + p.sigma[k] * eta);
        }
        h.push(path);
    }
    let mut f = vec![vec![0.0; n]; r];
    let mut y = DMatrix::zeros(n, m);
    for t in 0..n {
        let mut rng = substream(truth.seed, 1, t as u64);
        for j in 0..r {
            f[j][t] = (0.5 * h[m + j][t + 1]).exp() * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..m {
            let common: f64 = (0..r).map(|j| p.loadings[(i, j)] * f[j][t]).sum();
            y[(t, i)] = common + (0.5 * h[i][t + 1]).exp() * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let dates = synthetic_dates(n + 1);
    let panel = ReturnPanel {
        dates: dates[1..].to_vec(),
        names: (1..=m).map(|i| format!("series{i:02}")).collect(),
        returns: y,
        demeaned: false,
    };
    Ok((panel, LatentPaths { h, f }))
}

/// `n` fortnightly ISO dates starting 2000-01-03.
pub fn synthetic_dates(n: usize) -> Vec<String> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    (0..n as u64).map(|k| (start + Days::new(14 * k)).format("%Y-%m-%d").to_string()).collect()
}

/// Prices obtained by cumulating returns from `base` at `base_date`, the
/// date preceding the first return.
pub fn prices_from_returns(panel: &ReturnPanel, base_date: &str, base: f64) -> Result<PricePanel> {
    let n = panel.n_obs();
    let m = panel.n_series();
    let mut prices = DMatrix::zeros(n + 1, m);
    for i in 0..m {
        let mut logp = base.ln();
        prices[(0, i)] = base;
        for t in 0..n {
            logp += panel.returns[(t, i)];
            prices[(t + 1, i)] = logp.exp();
        }
    }
    let mut dates = vec![base_date.to_string()];
    dates.extend(panel.dates.iter().cloned());
    PricePanel::new(dates, panel.names.clone(), prices)
}

/// Simulated prices from base 100 on the synthetic calendar.
pub fn simulate_prices(truth: &TrueParams) -> Result<(PricePanel, LatentPaths)> {
    let (panel, latent) = simulate_panel(truth)?;
    let prices = prices_from_returns(&panel, &synthetic_dates(1)[0], 100.0)?;
    Ok((prices, latent))
}

pub fn fixture(name: &str) -> Result<TrueParams> {
    let cyc = |v: &[f64], k: usize| v[k % v.len()];
    let t = match name {
        "tiny" => TrueParams {
            params: ParameterDraw {
                mu: vec![-1.0, -0.5, -1.5, 0.0],
                phi: vec![0.90, 0.95, 0.85, 0.95],
                sigma: vec![0.20, 0.15, 0.25, 0.20],
                loadings: DMatrix::from_column_slice(3, 1, &[1.0, 0.8, 0.6]),
            },
            n_obs: 200,
            seed: 11,
            ar_sign: ArSign::Plus,
        },
        "paper-shape" => {
            let (m, r) = (12, 4);
            let loadings = DMatrix::from_fn(m, r, |i, j| if i / 3 == j { [0.9, 0.8, 0.7][i % 3] } else { 0.15 });
            let mut mu: Vec<f64> = (0..m).map(|i| cyc(&[-1.0, -0.7, -1.3], i)).collect();
            let mut phi: Vec<f64> = (0..m).map(|i| cyc(&[0.90, 0.95, 0.97], i)).collect();
            let mut sigma: Vec<f64> = (0..m).map(|i| cyc(&[0.20, 0.15, 0.10], i)).collect();
            mu.extend([0.0; 4]);
            phi.extend([0.95; 4]);
            sigma.extend([0.20; 4]);
            TrueParams { params: ParameterDraw { mu, phi, sigma, loadings }, n_obs: 425, seed: 12, ar_sign: ArSign::Plus }
        }
        "recovery" => TrueParams {
            params: ParameterDraw {
                mu: vec![-1.0, -0.8, -1.2, -0.6, -1.4, -1.0, 0.0, 0.0],
                phi: vec![0.95, 0.90, 0.93, 0.85, 0.97, 0.90, 0.95, 0.90],
                sigma: vec![0.20, 0.25, 0.15, 0.30, 0.10, 0.20, 0.20, 0.25],
                loadings: DMatrix::from_column_slice(
                    6,
                    2,
                    &[1.0, 0.8, 0.6, 0.3, 0.2, 0.1, 0.1, 0.3, 0.5, 0.9, 0.7, 1.0],
                ),
            },
            n_obs: 1000,
            seed: 13,
            ar_sign: ArSign::Plus,
        },
        other => {
            return Err(Error::invalid(
                ViolationCode::UnknownFixture,
                format!("unknown fixture `{other}`; expected one of {}", FIXTURES.join(", ")),
            ))
        }
    };
    Ok(t)
}

/// Sidecar file holding the generating parameters and the latent paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub names: Vec<String>,
    pub truth: TrueParams,
    pub latent: LatentPaths,
}

pub fn write_truth<W: Write>(file: &TruthFile, w: W) -> std::result::Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(w, file)
}

pub fn read_truth<R: Read>(r: R) -> std::result::Result<TruthFile, serde_json::Error> {
    serde_json::from_reader(r)
}
