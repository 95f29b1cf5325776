//! Pointwise posterior quantiles of the time-varying covariance structure
//! and of the static parameters.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::static_parameters;
use super::ess::effective_sample_size;
use super::store::PosteriorStore;
use crate::data::quantile_violations;
use crate::error::{Error, Result, ViolationCode};
use crate::factor::{communalities, covariance_to_correlation, reconstruct_covariance};
use crate::linalg::cholesky_in_place;

/// Quantile of already sorted data by linear interpolation between order
/// statistics at position `(n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sorts `values` in place and returns one quantile per entry of `qs`.
pub fn quantiles(values: &mut [f64], qs: &[f64]) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    qs.iter().map(|&q| quantile_sorted(values, q)).collect()
}

/// Counts of draws that broke a structural invariant while summarizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryChecks {
    pub matrices_checked: usize,
    pub not_positive_definite: usize,
    pub correlation_out_of_range: usize,
    pub communality_out_of_range: usize,
}

impl SummaryChecks {
    pub fn total_violations(&self) -> usize {
        self.not_positive_definite + self.correlation_out_of_range + self.communality_out_of_range
    }

    fn merge(mut self, o: SummaryChecks) -> Self {
        self.matrices_checked += o.matrices_checked;
        self.not_positive_definite += o.not_positive_definite;
        self.correlation_out_of_range += o.correlation_out_of_range;
        self.communality_out_of_range += o.communality_out_of_range;
        self
    }
}

/// Summaries at one date; the outer index of every field is the quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePointSummary {
    pub sigma: Vec<DMatrix<f64>>,
    pub correlation: Vec<DMatrix<f64>>,
    pub communalities: Vec<Vec<f64>>,
    pub marginal_vol: Vec<Vec<f64>>,
    pub factor_vol: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSeries {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub quantiles: Vec<f64>,
    pub n_factors: usize,
    pub points: Vec<TimePointSummary>,
    pub checks: SummaryChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
    /// `None` for stores too short to estimate it.
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub series: CovarianceSeries,
    pub parameters: Vec<ParameterSummary>,
}

fn check_request(store: &PosteriorStore, qs: &[f64]) -> Result<Vec<f64>> {
    let mut bad = quantile_violations(qs);
    if store.is_empty() {
        bad.push(crate::Violation::new(ViolationCode::NonPositiveCount, "posterior store is empty"));
    }
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let mut qs = qs.to_vec();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    Ok(qs)
}

/// Σ_t of one draw at time index `t` (0-based over returns).
pub fn draw_covariance(store: &PosteriorStore, draw: usize, t: usize) -> DMatrix<f64> {
    let m = store.config.n_series;
    let r = store.config.model.factors;
    let (p, l) = &store.draws[draw];
    let u: Vec<f64> = (0..m).map(|i| l.h[i][t + 1].exp()).collect();
    let v: Vec<f64> = (0..r).map(|j| l.h[m + j][t + 1].exp()).collect();
    reconstruct_covariance(&p.loadings, &v, &u)
}

fn summarize_point(store: &PosteriorStore, t: usize, qs: &[f64]) -> (TimePointSummary, SummaryChecks) {
    let m = store.config.n_series;
    let r = store.config.model.factors;
    let n = store.len();
    let nq = qs.len();
    let mut checks = SummaryChecks::default();
    // element-major buffers so each element's draws are contiguous
    let mut sig = vec![0.0; m * m * n];
    let mut cor = vec![0.0; m * m * n];
    let mut com = vec![0.0; m * n];
    let mut fvol = vec![0.0; r * n];
    let mut chol = vec![0.0; m * m];
    for d in 0..n {
        let (p, l) = &store.draws[d];
        let u: Vec<f64> = (0..m).map(|i| l.h[i][t + 1].exp()).collect();
        let v: Vec<f64> = (0..r).map(|j| l.h[m + j][t + 1].exp()).collect();
        let s = reconstruct_covariance(&p.loadings, &v, &u);
        checks.matrices_checked += 1;
        chol.copy_from_slice(s.as_slice());
        if cholesky_in_place(&mut chol, m).is_err() {
            checks.not_positive_definite += 1;
        }
        match covariance_to_correlation(&s) {
            Ok(c) => {
                let raw_ok = (0..m).all(|a| {
                    (0..m).all(|b| a == b || (s[(a, b)] / (s[(a, a)] * s[(b, b)]).sqrt()).abs() <= 1.0 + 1e-12)
                });
                if !raw_ok {
                    checks.correlation_out_of_range += 1;
                }
                for (e, x) in c.iter().enumerate() {
                    cor[e * n + d] = *x;
                }
            }
            Err(_) => checks.correlation_out_of_range += 1,
        }
        for (e, x) in s.iter().enumerate() {
            sig[e * n + d] = *x;
        }
        for (i, c) in communalities(&p.loadings, &v, &u).into_iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                checks.communality_out_of_range += 1;
            }
            com[i * n + d] = c;
        }
        for j in 0..r {
            fvol[j * n + d] = v[j].sqrt();
        }
    }
    let per_element = |buf: &mut [f64], k: usize| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; k]; nq];
        for e in 0..k {
            let qv = quantiles(&mut buf[e * n..(e + 1) * n], qs);
            for (qi, x) in qv.into_iter().enumerate() {
                out[qi][e] = x;
            }
        }
        out
    };
    let to_mats = |v: Vec<Vec<f64>>| v.into_iter().map(|x| DMatrix::from_vec(m, m, x)).collect::<Vec<_>>();
    let sigma = to_mats(per_element(&mut sig, m * m));
    let marginal_vol = sigma.iter().map(|s| (0..m).map(|i| s[(i, i)].sqrt()).collect()).collect();
    let point = TimePointSummary {
        correlation: to_mats(per_element(&mut cor, m * m)),
        communalities: per_element(&mut com, m),
        factor_vol: per_element(&mut fvol, r),
        marginal_vol,
        sigma,
    };
    (point, checks)
}

/// Pointwise posterior quantiles of Σ_t, R_t, communalities, marginal and
/// factor volatilities for every `t`.
///
/// Marginal volatilities are `sqrt` of the quantiles of `Σ_t,ii`, which
/// equals the quantiles of `sqrt(Σ_t,ii)` because `sqrt` is monotone.
pub fn covariance_series(store: &PosteriorStore, qs: &[f64]) -> Result<CovarianceSeries> {
    let qs = check_request(store, qs)?;
    let n_obs = store.config.n_obs;
    let parts: Vec<_> = (0..n_obs).into_par_iter().map(|t| summarize_point(store, t, &qs)).collect();
    let mut checks = SummaryChecks::default();
    let mut points = Vec::with_capacity(n_obs);
    for (p, c) in parts {
        checks = checks.merge(c);
        points.push(p);
    }
    Ok(CovarianceSeries {
        dates: store.panel.dates.clone(),
        names: store.panel.names.clone(),
        quantiles: qs,
        n_factors: store.config.model.factors,
        points,
        checks,
    })
}

pub fn parameter_table(store: &PosteriorStore, qs: &[f64]) -> Result<Vec<ParameterSummary>> {
    let qs = check_request(store, qs)?;
    Ok(static_parameters(store)
        .into_iter()
        .map(|(name, mut values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let ess = effective_sample_size(&values).ok().map(|e| e.value);
            let quantiles = quantiles(&mut values, &qs);
            ParameterSummary { name, mean, sd, quantiles, ess }
        })
        .collect())
}

pub fn summarize(store: &PosteriorStore, qs: &[f64]) -> Result<Summary> {
    Ok(Summary { series: covariance_series(store, qs)?, parameters: parameter_table(store, qs)? })
}
