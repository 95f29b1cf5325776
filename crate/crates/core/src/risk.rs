//! Gaussian VaR and CoVaR from model-implied covariance matrices, and
//! exceedance backtests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, ViolationCode};
use crate::mcmc::{draw_covariance, quantiles, PosteriorStore};

pub const DEFAULT_LEVELS: [f64; 4] = [0.01, 0.05, 0.95, 0.99];

/// Eigenvalue floor used when repairing a median covariance matrix.
pub const PSD_FLOOR: f64 = 1e-10;

/// Standard normal quantile, Wichura's AS 241 (PPND16).
///
/// Relative accuracy is about 1e-16 over the whole open unit interval.
/// Upper-tail values are reflected from the lower tail, so
/// `norm_quantile(p) == -norm_quantile(1 - p)` holds bit for bit whenever
/// `1 - p` is exact.
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    if p > 0.5 {
        -ppnd16(1.0 - p)
    } else {
        ppnd16(p)
    }
}

// published coefficients, kept digit for digit
#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(ViolationCode::QuantileRange, format!("level {q} outside (0, 1)")))
    }
}

/// `sqrt(sigma_ii) · Φ⁻¹(q)`.
pub fn var_quantile(sigma_ii: f64, q: f64) -> Result<f64> {
    check_level(q)?;
    if !(sigma_ii > 0.0 && sigma_ii.is_finite()) {
        return Err(Error::invalid(ViolationCode::NonFiniteValue, format!("variance {sigma_ii} must be positive")));
    }
    Ok(sigma_ii.sqrt() * norm_quantile(q))
}

fn check_sets(m: usize, targets: &[usize], cond: &[usize]) -> Vec<Violation> {
    let mut out = Vec::new();
    for &k in targets.iter().chain(cond) {
        if k >= m {
            out.push(Violation::new(ViolationCode::IndexOutOfRange, format!("index {k} outside 0..{m}")));
        }
    }
    for (a, &k) in targets.iter().enumerate() {
        if targets[..a].contains(&k) {
            out.push(Violation::new(ViolationCode::OverlappingSets, format!("target index {k} repeated")));
        }
    }
    for (a, &k) in cond.iter().enumerate() {
        if cond[..a].contains(&k) {
            out.push(Violation::new(ViolationCode::OverlappingSets, format!("conditioning index {k} repeated")));
        }
        if targets.contains(&k) {
            out.push(Violation::new(ViolationCode::OverlappingSets, format!("index {k} is both target and condition")));
        }
    }
    out
}

/// Moments of `y_targets | y_cond = cond_values` for `y ~ N(0, sigma)`:
/// mean `Σ₁₂ Σ₂₂⁻¹ y₂` and covariance `Σ₁₁ − Σ₁₂ Σ₂₂⁻¹ Σ₂₁`.
pub fn conditional_gaussian(
    sigma: &DMatrix<f64>,
    targets: &[usize],
    cond: &[usize],
    cond_values: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = sigma.nrows();
    let mut bad = check_sets(m, targets, cond);
    if sigma.ncols() != m {
        bad.push(Violation::new(ViolationCode::ShapeMismatch, "covariance matrix must be square"));
    }
    if cond_values.len() != cond.len() {
        bad.push(Violation::new(
            ViolationCode::ShapeMismatch,
            format!("{} conditioning values for {} indices", cond_values.len(), cond.len()),
        ));
    }
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let s11 = sigma.select_rows(targets).select_columns(targets);
    if cond.is_empty() {
        return Ok((DVector::zeros(targets.len()), s11));
    }
    let s12 = sigma.select_rows(targets).select_columns(cond);
    let s22 = sigma.select_rows(cond).select_columns(cond);
    let chol = s22.cholesky().ok_or_else(|| Error::SingularConditioning { set: cond.to_vec() })?;
    let y2 = DVector::from_column_slice(cond_values);
    let mean = &s12 * chol.solve(&y2);
    let mut cov = &s11 - &s12 * chol.solve(&s12.transpose());
    // exact symmetry
    for a in 0..cov.nrows() {
        for b in 0..a {
            let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((mean, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskQuery {
    pub target: usize,
    pub cond: Vec<usize>,
    pub q: f64,
}

/// Quantile of `y_i` given every `y_j, j ∈ J` sits at its own marginal VaR.
pub fn covar(sigma: &DMatrix<f64>, query: &RiskQuery) -> Result<f64> {
    check_level(query.q)?;
    let z = norm_quantile(query.q);
    let mut y2 = Vec::with_capacity(query.cond.len());
    for &j in &query.cond {
        if j < sigma.nrows() {
            y2.push(var_quantile(sigma[(j, j)], query.q)?);
        }
    }
    let (mean, cov) = conditional_gaussian(sigma, &[query.target], &query.cond, &y2)?;
    Ok(mean[0] + cov[(0, 0)].max(0.0).sqrt() * z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub level: f64,
    pub n: usize,
    pub count: usize,
    pub rate: f64,
    /// Wilson 95% interval for the exceedance probability.
    pub rate_interval: (f64, f64),
    /// Central 95% range of the rate under a correctly calibrated VaR.
    pub expected_interval: (f64, f64),
    pub exceedances: Vec<usize>,
}

impl Backtest {
    pub fn calibrated(&self) -> bool {
        self.rate >= self.expected_interval.0 && self.rate <= self.expected_interval.1
    }
}

/// Counts `return < VaR` for lower-tail levels and `return > VaR` for
/// upper-tail levels.
pub fn exceedance_backtest(returns: &[f64], var_series: &[f64], q: f64) -> Result<Backtest> {
    check_level(q)?;
    if returns.len() != var_series.len() || returns.is_empty() {
        return Err(Error::invalid(
            ViolationCode::ShapeMismatch,
            format!("{} returns against {} VaR values", returns.len(), var_series.len()),
        ));
    }
    let n = returns.len();
    let exceedances: Vec<usize> = (0..n)
        .filter(|&t| if q < 0.5 { returns[t] < var_series[t] } else { returns[t] > var_series[t] })
        .collect();
    let count = exceedances.len();
    let tail = if q < 0.5 { q } else { 1.0 - q };
    let (lo, hi) = binomial_central_range(n, tail, 0.95);
    Ok(Backtest {
        level: q,
        n,
        count,
        rate: count as f64 / n as f64,
        rate_interval: wilson_interval(count, n, 0.95),
        expected_interval: (lo as f64 / n as f64, hi as f64 / n as f64),
        exceedances,
    })
}

pub fn wilson_interval(k: usize, n: usize, coverage: f64) -> (f64, f64) {
    let z = norm_quantile(0.5 + coverage / 2.0);
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Smallest `lo` and `hi` with `P(K ≤ lo) ≥ α/2` and `P(K ≤ hi) ≥ 1 − α/2`
/// for `K ~ Binomial(n, p)`, `α = 1 − coverage`.
pub fn binomial_central_range(n: usize, p: f64, coverage: f64) -> (usize, usize) {
    let alpha = 1.0 - coverage;
    // pmf by recurrence in log space keeps large n stable
    let lq = (1.0 - p).ln();
    let ratio = (p / (1.0 - p)).ln();
    let mut logpmf = n as f64 * lq;
    let mut cdf = 0.0;
    let mut lo = None;
    for k in 0..=n {
        if k > 0 {
            logpmf += ((n - k + 1) as f64 / k as f64).ln() + ratio;
        }
        cdf += logpmf.exp();
        if lo.is_none() && cdf >= alpha / 2.0 {
            lo = Some(k);
        }
        if cdf >= 1.0 - alpha / 2.0 {
            return (lo.unwrap_or(k), k);
        }
    }
    (lo.unwrap_or(n), n)
}

/// Nearest PSD matrix under eigenvalue clipping at [`PSD_FLOOR`]; the flag
/// reports whether any eigenvalue had to be raised.
pub fn repair_psd(sigma: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= PSD_FLOOR) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(PSD_FLOOR));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    for a in 0..out.nrows() {
        for b in 0..a {
            let x = 0.5 * (out[(a, b)] + out[(b, a)]);
            out[(a, b)] = x;
            out[(b, a)] = x;
        }
    }
    (out, true)
}

/// Elementwise posterior median of Σ_t, repaired to PSD when needed.
pub fn median_covariance(store: &PosteriorStore, t: usize) -> (DMatrix<f64>, bool) {
    let m = store.config.n_series;
    let n = store.len();
    let mats: Vec<DMatrix<f64>> = (0..n).map(|d| draw_covariance(store, d, t)).collect();
    let mut med = DMatrix::zeros(m, m);
    let mut buf = vec![0.0; n];
    for a in 0..m {
        for b in 0..=a {
            for (d, s) in mats.iter().enumerate() {
                buf[d] = s[(a, b)];
            }
            let v = quantiles(&mut buf, &[0.5])[0];
            med[(a, b)] = v;
            med[(b, a)] = v;
        }
    }
    repair_psd(&med)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarMode {
    /// Risk measures of the elementwise posterior-median Σ_t.
    #[default]
    MedianSigma,
    /// Posterior median of the risk measures computed draw by draw.
    PerDraw,
}

/// Which series to compute risk for and what to condition on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub target: usize,
    /// Condition on one other series.
    pub single: Option<usize>,
    /// Condition on a group of series at once.
    pub set: Vec<usize>,
    pub levels: Vec<f64>,
}

impl RiskSpec {
    /// Single-series preset: condition `target` on `other`.
    pub fn single_series(target: usize, other: usize, levels: &[f64]) -> Self {
        RiskSpec { target, single: Some(other), set: Vec::new(), levels: levels.to_vec() }
    }

    /// Region preset: condition `target` on every member of `region` other
    /// than itself.
    pub fn region(target: usize, region: &[usize], levels: &[f64]) -> Self {
        let set = region.iter().copied().filter(|&j| j != target).collect();
        RiskSpec { target, single: None, set, levels: levels.to_vec() }
    }

    pub fn violations(&self, m: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.levels.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyQuantiles, "no risk levels requested"));
        }
        for &q in &self.levels {
            if !(q > 0.0 && q < 1.0) {
                out.push(Violation::new(ViolationCode::QuantileRange, format!("level {q} outside (0, 1)")));
            }
        }
        if let Some(j) = self.single {
            out.extend(check_sets(m, &[self.target], &[j]));
        }
        out.extend(check_sets(m, &[self.target], &self.set));
        out
    }
}

/// Risk measures for one target series; the outer index of each table is
/// the level, the inner one is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSeries {
    pub spec: RiskSpec,
    pub mode: CovarMode,
    pub var: Vec<Vec<f64>>,
    pub covar_single: Option<Vec<Vec<f64>>>,
    pub covar_set: Vec<Vec<f64>>,
    /// 5% and 1% VaR used for the exceedance flags.
    pub var_5: Vec<f64>,
    pub var_1: Vec<f64>,
    /// Dates (indices) at which the median Σ_t needed PSD repair.
    pub repaired: Vec<usize>,
}

fn measures(sigma: &DMatrix<f64>, spec: &RiskSpec) -> Result<Measures> {
    let i = spec.target;
    let var: Vec<f64> = spec.levels.iter().map(|&q| var_quantile(sigma[(i, i)], q)).collect::<Result<_>>()?;
    let single = match spec.single {
        Some(j) => Some(
            spec.levels
                .iter()
                .map(|&q| covar(sigma, &RiskQuery { target: i, cond: vec![j], q }))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let set = spec
        .levels
        .iter()
        .map(|&q| covar(sigma, &RiskQuery { target: i, cond: spec.set.clone(), q }))
        .collect::<Result<Vec<_>>>()?;
    Ok((var, single, set, var_quantile(sigma[(i, i)], 0.05)?, var_quantile(sigma[(i, i)], 0.01)?))
}

/// Risk measures of `spec` at every date of the store.
pub fn risk_series(store: &PosteriorStore, spec: &RiskSpec, mode: CovarMode) -> Result<RiskSeries> {
    Ok(risk_table(store, std::slice::from_ref(spec), mode)?.pop().expect("one spec in, one series out"))
}

type Measures = (Vec<f64>, Option<Vec<f64>>, Vec<f64>, f64, f64);

fn median_measures(per: &[Measures], spec: &RiskSpec) -> Measures {
    let nl = spec.levels.len();
    let med = |f: &dyn Fn(&Measures) -> f64| {
        let mut v: Vec<f64> = per.iter().map(f).collect();
        quantiles(&mut v, &[0.5])[0]
    };
    let var = (0..nl).map(|k| med(&|x| x.0[k])).collect();
    let single = spec.single.map(|_| (0..nl).map(|k| med(&|x| x.1.as_ref().unwrap()[k])).collect());
    let set = (0..nl).map(|k| med(&|x| x.2[k])).collect();
    (var, single, set, med(&|x| x.3), med(&|x| x.4))
}

/// Risk measures for several specs; each Σ_t is built once and shared.
pub fn risk_table(store: &PosteriorStore, specs: &[RiskSpec], mode: CovarMode) -> Result<Vec<RiskSeries>> {
    let bad: Vec<Violation> = specs.iter().flat_map(|s| s.violations(store.config.n_series)).collect();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    if store.is_empty() {
        return Err(Error::invalid(ViolationCode::NonPositiveCount, "posterior store is empty"));
    }
    let n_obs = store.config.n_obs;
    let per_t: Vec<(Vec<Measures>, bool)> = (0..n_obs)
        .into_par_iter()
        .map(|t| match mode {
            CovarMode::MedianSigma => {
                let (sigma, repaired) = median_covariance(store, t);
                Ok((specs.iter().map(|s| measures(&sigma, s)).collect::<Result<_>>()?, repaired))
            }
            CovarMode::PerDraw => {
                let mut per: Vec<Vec<Measures>> = vec![Vec::with_capacity(store.len()); specs.len()];
                for d in 0..store.len() {
                    let sigma = draw_covariance(store, d, t);
                    for (k, s) in specs.iter().enumerate() {
                        per[k].push(measures(&sigma, s)?);
                    }
                }
                Ok((specs.iter().zip(&per).map(|(s, p)| median_measures(p, s)).collect(), false))
            }
        })
        .collect::<Result<_>>()?;
    let repaired: Vec<usize> = per_t.iter().enumerate().filter(|(_, x)| x.1).map(|(t, _)| t).collect();
    let mut out = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let nl = spec.levels.len();
        let mut rs = RiskSeries {
            spec: spec.clone(),
            mode,
            var: vec![Vec::with_capacity(n_obs); nl],
            covar_single: spec.single.map(|_| vec![Vec::with_capacity(n_obs); nl]),
            covar_set: vec![Vec::with_capacity(n_obs); nl],
            var_5: Vec::with_capacity(n_obs),
            var_1: Vec::with_capacity(n_obs),
            repaired: repaired.clone(),
        };
        for (ms, _) in &per_t {
            let (var, single, set, v5, v1) = &ms[k];
            for l in 0..nl {
                rs.var[l].push(var[l]);
                rs.covar_set[l].push(set[l]);
                if let (Some(dst), Some(src)) = (rs.covar_single.as_mut(), single.as_ref()) {
                    dst[l].push(src[l]);
                }
            }
            rs.var_5.push(*v5);
            rs.var_1.push(*v1);
        }
        out.push(rs);
    }
    Ok(out)
}
