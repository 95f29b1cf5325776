//! Ten-component Gaussian mixture for the `log χ²(1)` distribution and the
//! observation-side steps that use it.

use std::f64::consts::PI;

use rand::Rng;

/// Gaussian mixture approximating the distribution of `log ε²`, `ε ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTable {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // log w_k − ½ log(2π v_k)
    log_norm: Vec<f64>,
}

// Omori, Chib, Shephard and Nakajima (2007).
const OCSN_WEIGHTS: [f64; 10] =
    [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115];
const OCSN_MEANS: [f64; 10] =
    [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000];
const OCSN_VARIANCES: [f64; 10] =
    [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342];

impl MixtureTable {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Self {
        assert!(!weights.is_empty(), "mixture needs at least one component");
        assert!(weights.len() == means.len() && means.len() == variances.len(), "mixture arrays differ in length");
        assert!(variances.iter().all(|&v| v > 0.0), "mixture variances must be positive");
        assert!(weights.iter().all(|&w| w >= 0.0), "mixture weights must be non-negative");
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_norm = weights.iter().zip(&variances).map(|(w, v)| w.ln() - 0.5 * (2.0 * PI * v).ln()).collect();
        MixtureTable { weights, means, variances, log_norm }
    }

    /// The standard ten-component table.
    pub fn ten_component() -> Self {
        Self::new(OCSN_WEIGHTS.to_vec(), OCSN_MEANS.to_vec(), OCSN_VARIANCES.to_vec())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights.iter().zip(&self.means).zip(&self.variances).map(|((w, m), v)| w * (v + m * m)).sum::<f64>()
            - mu * mu
    }

    /// Unnormalized log posterior weight of component `k` for residual `x`.
    pub fn log_component_weight(&self, k: usize, x: f64) -> f64 {
        let d = x - self.means[k];
        self.log_norm[k] - 0.5 * d * d / self.variances[k]
    }

    /// Normalized posterior component probabilities for residual `x`.
    pub fn posterior_weights(&self, x: f64) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.len()).map(|k| self.log_component_weight(k, x)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = p.iter().sum();
        p.into_iter().map(|v| v / s).collect()
    }
}

/// Log-squared residuals `z_t = log(e_t² + offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedObs {
    pub z: Vec<f64>,
    pub offset: f64,
}

pub fn linearize(residuals: &[f64], offset: f64) -> LinearizedObs {
    assert!(offset > 0.0, "linearization offset must be positive");
    LinearizedObs { z: residuals.iter().map(|e| (e * e + offset).ln()).collect(), offset }
}

/// Offset proportional to the residual scale: `1e-8 · var(e)`, floored at `1e-12`.
pub fn default_offset(residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (1e-8 * var).max(1e-12)
}

/// Draws `s_t ∝ w_k N(z_t − h_t; m_k, v_k)` independently over `t`.
///
/// `h` holds the log variances aligned with `z` (i.e. `h_1..h_T`).
pub fn sample_indicators<R: Rng + ?Sized>(z: &[f64], h: &[f64], table: &MixtureTable, rng: &mut R) -> Vec<usize> {
    assert_eq!(z.len(), h.len(), "indicator sampling needs aligned z and h");
    let k = table.len();
    let mut logs = vec![0.0; k];
    z.iter()
        .zip(h)
        .map(|(zt, ht)| {
            if k == 1 {
                return 0;
            }
            let x = zt - ht;
            let mut max = f64::NEG_INFINITY;
            for (j, l) in logs.iter_mut().enumerate() {
                *l = table.log_component_weight(j, x);
                max = max.max(*l);
            }
            let mut total = 0.0;
            for l in logs.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (j, p) in logs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            // u landed on the rounding gap at the top: take the last
            // component with positive mass.
            logs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect()
}
