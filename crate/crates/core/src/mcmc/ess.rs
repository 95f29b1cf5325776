use crate::error::{Error, Result, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// The chain never moved; `value` is 0.
    pub constant: bool,
}

/// Effective sample size `N / (1 + 2 Σ ρ_k)`.
///
/// The autocorrelation sum is truncated with Geyer's initial positive
/// sequence: lags are summed in adjacent pairs `ρ_{2k} + ρ_{2k+1}` until a
/// pair turns non-positive. The result is capped at `N`.
pub fn effective_sample_size(chain: &[f64]) -> Result<Ess> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::invalid(
            ViolationCode::TooFewObservations,
            format!("effective sample size needs at least 10 draws, got {n}"),
        ));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(ViolationCode::NonFiniteValue, "chain contains non-finite values"));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = chain.iter().map(|v| v - mean).collect();
    let c0 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = chain.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if c0 <= (f64::EPSILON * scale).powi(2) {
        return Ok(Ess { value: 0.0, constant: true });
    }
    let rho = |k: usize| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0;
    // tau = -1 + 2 * sum of positive pairs, starting with (rho_0, rho_1)
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(k) + rho(k + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    let value = if tau > 1.0 { n as f64 / tau } else { n as f64 };
    Ok(Ess { value, constant: false })
}
