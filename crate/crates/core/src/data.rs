//! Domain types, input validation, and return-panel preprocessing.
//!
//! Matrices are stored with time along rows: a `T × m` return panel keeps
//! each series in one contiguous column.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, ViolationCode};

/// Raw price panel as ingested from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    /// Opaque, strictly increasing date labels (ISO-8601 strings compare
    /// lexicographically in calendar order).
    pub dates: Vec<String>,
    pub names: Vec<String>,
    /// `T_raw × m` strictly positive prices.
    pub prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<String>, names: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        let panel = PricePanel { dates, names, prices };
        let v = panel.violations();
        if v.is_empty() {
            Ok(panel)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (t_raw, m) = self.prices.shape();
        if m == 0 {
            out.push(Violation::new(ViolationCode::SeriesCount, "panel has no series"));
        }
        if t_raw < 2 {
            out.push(Violation::new(
                ViolationCode::TooFewObservations,
                format!("need at least 2 price rows, got {t_raw}"),
            ));
        }
        if self.names.len() != m || self.dates.len() != t_raw {
            out.push(Violation::new(
                ViolationCode::ShapeMismatch,
                format!(
                    "{} names and {} dates for a {t_raw}x{m} price matrix",
                    self.names.len(),
                    self.dates.len()
                ),
            ));
            return out;
        }
        check_unique_names(&self.names, &mut out);
        check_dates(&self.dates, &mut out);
        for i in 0..m {
            for t in 0..t_raw {
                let p = self.prices[(t, i)];
                if !p.is_finite() {
                    out.push(Violation::new(
                        ViolationCode::NonFiniteValue,
                        format!("price at row {} column {} ({}) is not finite", t + 1, i + 1, self.names[i]),
                    ));
                } else if p <= 0.0 {
                    out.push(Violation::new(
                        ViolationCode::NonPositivePrice,
                        format!("price at row {} column {} ({}) is {p}, must be > 0", t + 1, i + 1, self.names[i]),
                    ));
                }
            }
        }
        out
    }

    pub fn n_series(&self) -> usize {
        self.prices.ncols()
    }
}

fn check_unique_names(names: &[String], out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            out.push(Violation::new(ViolationCode::DuplicateSeries, format!("duplicate series name `{n}`")));
        }
    }
}

fn check_dates(dates: &[String], out: &mut Vec<Violation>) {
    for (k, w) in dates.windows(2).enumerate() {
        if w[1] <= w[0] {
            out.push(Violation::new(
                ViolationCode::DateOrder,
                format!("date `{}` at row {} does not follow `{}`", w[1], k + 2, w[0]),
            ));
        }
    }
}

/// Log-return panel; the observed data of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    /// `T × m` log returns.
    pub returns: DMatrix<f64>,
    pub demeaned: bool,
}

impl ReturnPanel {
    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.returns.ncols()
    }

    pub fn series(&self, i: usize) -> &[f64] {
        let t = self.returns.nrows();
        &self.returns.as_slice()[i * t..(i + 1) * t]
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (t, m) = self.returns.shape();
        if m == 0 {
            out.push(Violation::new(ViolationCode::SeriesCount, "panel has no series"));
        }
        if t < 2 {
            out.push(Violation::new(
                ViolationCode::TooFewObservations,
                format!("need at least 2 return rows, got {t}"),
            ));
        }
        if self.names.len() != m || self.dates.len() != t {
            out.push(Violation::new(
                ViolationCode::ShapeMismatch,
                format!("{} names and {} dates for a {t}x{m} return matrix", self.names.len(), self.dates.len()),
            ));
            return out;
        }
        check_unique_names(&self.names, &mut out);
        check_dates(&self.dates, &mut out);
        if let Some(k) = self.returns.iter().position(|v| !v.is_finite()) {
            out.push(Violation::new(
                ViolationCode::NonFiniteValue,
                format!("return at row {} column {} is not finite", k % t.max(1) + 1, k / t.max(1) + 1),
            ));
        }
        out
    }
}

/// Differences of log prices: `r[t][i] = ln p[t+1][i] − ln p[t][i]`.
pub fn compute_log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let v = panel.violations();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let (t_raw, m) = panel.prices.shape();
    let returns = DMatrix::from_fn(t_raw - 1, m, |t, i| panel.prices[(t + 1, i)].ln() - panel.prices[(t, i)].ln());
    Ok(ReturnPanel {
        dates: panel.dates[1..].to_vec(),
        names: panel.names.clone(),
        returns,
        demeaned: false,
    })
}

/// Per-column arithmetic mean subtraction. Idempotent.
pub fn demean(panel: &ReturnPanel) -> ReturnPanel {
    let mut out = panel.clone();
    let t = out.returns.nrows();
    for mut col in out.returns.column_iter_mut() {
        // Two passes: the residual mean after one subtraction is at rounding
        // level, the second pass removes most of it.
        for _ in 0..2 {
            let mean = col.iter().sum::<f64>() / t as f64;
            col.iter_mut().for_each(|v| *v -= mean);
        }
    }
    out.demeaned = true;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArSign {
    /// `h_t = μ + φ (h_{t−1} − μ) + σ η_t`.
    #[default]
    Plus,
    /// `h_t = μ − φ (h_{t−1} − μ) + σ η_t`, the literal printed recursion.
    Minus,
}

impl ArSign {
    pub fn factor(self) -> f64 {
        match self {
            ArSign::Plus => 1.0,
            ArSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub factors: usize,
    pub n_draws: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub ar_sign: ArSign,
    /// Run the conditionally independent blocks of a sweep on the rayon pool.
    pub parallel: bool,
    /// Abort with a checkpoint once a chain has run this many seconds.
    pub max_seconds: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            factors: 4,
            n_draws: 100_000,
            n_burnin: 50_000,
            thin: 100,
            seed: 42,
            quantiles: vec![0.1, 0.5, 0.9],
            ar_sign: ArSign::Plus,
            parallel: false,
            max_seconds: None,
        }
    }
}

impl ModelConfig {
    pub fn retained(&self) -> usize {
        self.n_draws / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
    pub loading_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            mu_mean: 0.0,
            mu_var: 100.0,
            phi_a: 20.0,
            phi_b: 1.5,
            sigma2_shape: 0.5,
            sigma2_rate: 0.5,
            loading_var: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let positive = [
            ("mu_var", self.mu_var),
            ("phi_a", self.phi_a),
            ("phi_b", self.phi_b),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("loading_var", self.loading_var),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(ViolationCode::PriorParameter, format!("prior `{name}` must be > 0, got {v}")));
            }
        }
        if !self.mu_mean.is_finite() {
            out.push(Violation::new(ViolationCode::PriorParameter, "prior `mu_mean` must be finite"));
        }
        out
    }
}

/// A configuration that passed [`validate_config`] against a specific panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckedConfig {
    pub n_series: usize,
    pub n_obs: usize,
    pub model: ModelConfig,
    pub prior: PriorConfig,
}

impl CheckedConfig {
    pub fn n_processes(&self) -> usize {
        self.n_series + self.model.factors
    }
}

pub fn validate_config(model: &ModelConfig, prior: &PriorConfig, panel: &ReturnPanel) -> Result<CheckedConfig> {
    let mut out = panel.violations();
    let m = panel.n_series();
    if model.factors >= m.max(1) {
        out.push(Violation::new(
            ViolationCode::FactorCount,
            format!("factor count {} must be smaller than series count {m}", model.factors),
        ));
    }
    for (name, v) in [("draws", model.n_draws), ("thin", model.thin)] {
        if v == 0 {
            out.push(Violation::new(ViolationCode::NonPositiveCount, format!("`{name}` must be positive")));
        }
    }
    if model.thin > 0 && !model.n_draws.is_multiple_of(model.thin) {
        out.push(Violation::new(
            ViolationCode::ThinDivisibility,
            format!("draws {} not divisible by thin {}", model.n_draws, model.thin),
        ));
    }
    out.extend(quantile_violations(&model.quantiles));
    if let Some(s) = model.max_seconds {
        if !(s > 0.0) {
            out.push(Violation::new(ViolationCode::NonPositiveCount, "`max_seconds` must be positive"));
        }
    }
    out.extend(prior.violations());
    if !out.is_empty() {
        return Err(Error::Invalid(out));
    }
    let mut model = model.clone();
    model.quantiles = normalize_quantiles(&model.quantiles);
    Ok(CheckedConfig { n_series: m, n_obs: panel.n_obs(), model, prior: prior.clone() })
}

pub fn quantile_violations(qs: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    if qs.is_empty() {
        out.push(Violation::new(ViolationCode::EmptyQuantiles, "quantile list is empty"));
    }
    for &q in qs {
        if !(q > 0.0 && q < 1.0) {
            out.push(Violation::new(ViolationCode::QuantileRange, format!("quantile {q} outside (0, 1)")));
        }
    }
    out
}

fn normalize_quantiles(qs: &[f64]) -> Vec<f64> {
    let mut v = qs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// One posterior draw of the static parameters.
///
/// `mu`, `phi` and `sigma` are indexed by process: `0..m` idiosyncratic,
/// `m..m+r` factors. Factor levels are identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `m × r`.
    pub loadings: DMatrix<f64>,
}

impl ParameterDraw {
    pub fn n_series(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn violations(&self) -> Vec<String> {
        let (m, r) = self.loadings.shape();
        let mut out = Vec::new();
        if self.mu.len() != m + r || self.phi.len() != m + r || self.sigma.len() != m + r {
            out.push(format!("parameter vectors must have length {}", m + r));
            return out;
        }
        for i in 0..m + r {
            if !(self.phi[i].abs() < 1.0) {
                out.push(format!("phi[{i}] = {} not in (-1, 1)", self.phi[i]));
            }
            if !(self.sigma[i] > 0.0 && self.sigma[i].is_finite()) {
                out.push(format!("sigma[{i}] = {} not positive", self.sigma[i]));
            }
            if !self.mu[i].is_finite() {
                out.push(format!("mu[{i}] not finite"));
            }
        }
        for j in 0..r {
            if self.mu[m + j] != 0.0 {
                out.push(format!("factor level mu[{}] = {} must be 0", m + j, self.mu[m + j]));
            }
        }
        if self.loadings.iter().any(|v| !v.is_finite()) {
            out.push("non-finite loading".into());
        }
        out
    }
}

/// Latent log-variance paths and factor scores of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPaths {
    /// `m + r` paths, each of length `T + 1` (index 0 is the initial state).
    pub h: Vec<Vec<f64>>,
    /// `r` factor-score paths, each of length `T`.
    pub f: Vec<Vec<f64>>,
}

impl LatentPaths {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.h.iter().flatten().chain(self.f.iter().flatten()).any(|v| !v.is_finite()) {
            out.push("non-finite latent value".into());
        }
        if let Some(first) = self.h.first() {
            if self.h.iter().any(|p| p.len() != first.len()) {
                out.push("ragged log-variance paths".into());
            }
            if self.f.iter().any(|p| p.len() + 1 != first.len()) {
                out.push("factor paths must have length T".into());
            }
        }
        out
    }
}

/// Reads the input CSV: header `date,<series>...`, one row per date.
pub fn read_price_csv<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::invalid(ViolationCode::MalformedCsv, format!("unreadable header: {e}"))),
        None => return Err(Error::invalid(ViolationCode::MalformedCsv, "empty file: missing header row")),
    };
    if header.get(0).map(|s| s.trim().trim_start_matches('\u{feff}')) != Some("date") {
        return Err(Error::invalid(
            ViolationCode::MalformedCsv,
            "missing header row: first column must be named `date`",
        ));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if names.is_empty() {
        return Err(Error::invalid(ViolationCode::SeriesCount, "header names no price columns"));
    }
    let m = names.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in records.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::invalid(ViolationCode::MalformedCsv, format!("line {row}: {e}")))?;
        if rec.len() != m + 1 {
            return Err(Error::invalid(
                ViolationCode::MalformedCsv,
                format!("line {row}: expected {} fields, found {}", m + 1, rec.len()),
            ));
        }
        dates.push(rec[0].trim().to_string());
        for (i, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::invalid(
                    ViolationCode::MissingValue,
                    format!("line {row}, column `{}`: missing value", names[i]),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid(
                    ViolationCode::MalformedCsv,
                    format!("line {row}, column `{}`: `{cell}` is not a number", names[i]),
                )
            })?;
            values.push(v);
        }
    }
    let t_raw = dates.len();
    let prices = DMatrix::from_row_slice(t_raw, m, &values);
    PricePanel::new(dates, names, prices)
}

pub fn write_price_csv<W: Write>(panel: &PricePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Format { path: "<csv>".into(), detail: e.to_string() };
    let mut header = vec!["date".to_string()];
    header.extend(panel.names.iter().cloned());
    w.write_record(&header).map_err(map)?;
    for (t, d) in panel.dates.iter().enumerate() {
        let mut row = vec![d.clone()];
        row.extend((0..panel.n_series()).map(|i| panel.prices[(t, i)].to_string()));
        w.write_record(&row).map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
