//! CSV output. Floats are written in shortest round-trip form.

use std::fs::File;
use std::path::Path;

use fsvol::mcmc::{CovarianceSeries, ParameterSummary};
use fsvol::{Error, Result};

pub struct Table {
    path: std::path::PathBuf,
    w: csv::Writer<File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut t = Table { path: path.to_path_buf(), w };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let path = &self.path;
        self.w.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|e| csv_err(path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { path: path.to_path_buf(), detail: format!("{other:?}") },
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Long-format files for the posterior summaries of a covariance series:
/// `volatility.csv`, `factor_volatility.csv`, `communality.csv`,
/// `correlation.csv` and `covariance.csv`.
pub fn write_series(dir: &Path, s: &CovarianceSeries) -> Result<()> {
    let qs = &s.quantiles;
    let m = s.names.len();
    let factor_names: Vec<String> = (0..s.n_factors).map(|j| format!("factor{}", j + 1)).collect();

    let mut vol = Table::create(&dir.join("volatility.csv"), &["date", "series", "quantile", "value"])?;
    let mut com = Table::create(&dir.join("communality.csv"), &["date", "series", "quantile", "value"])?;
    let mut fac = Table::create(&dir.join("factor_volatility.csv"), &["date", "factor", "quantile", "value"])?;
    let mut cor =
        Table::create(&dir.join("correlation.csv"), &["date", "series_a", "series_b", "quantile", "value"])?;
    let mut cov =
        Table::create(&dir.join("covariance.csv"), &["date", "series_a", "series_b", "quantile", "value"])?;
    for (date, p) in s.dates.iter().zip(&s.points) {
        for (k, &q) in qs.iter().enumerate() {
            for i in 0..m {
                vol.row([date.clone(), s.names[i].clone(), num(q), num(p.marginal_vol[k][i])])?;
                com.row([date.clone(), s.names[i].clone(), num(q), num(p.communalities[k][i])])?;
            }
            for (j, name) in factor_names.iter().enumerate() {
                fac.row([date.clone(), name.clone(), num(q), num(p.factor_vol[k][j])])?;
            }
            for a in 0..m {
                for b in a..m {
                    let pair = [date.clone(), s.names[a].clone(), s.names[b].clone(), num(q)];
                    cov.row(pair.iter().cloned().chain([num(p.sigma[k][(a, b)])]))?;
                    if a != b {
                        cor.row(pair.into_iter().chain([num(p.correlation[k][(a, b)])]))?;
                    }
                }
            }
        }
    }
    vol.finish()?;
    com.finish()?;
    fac.finish()?;
    cor.finish()?;
    cov.finish()
}

pub fn write_parameters(path: &Path, params: &[ParameterSummary], qs: &[f64]) -> Result<()> {
    let mut header = vec!["parameter".to_string(), "mean".into(), "sd".into()];
    header.extend(qs.iter().map(|q| format!("q{q}")));
    header.push("ess".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(path, &refs)?;
    for p in params {
        let mut row = vec![p.name.clone(), num(p.mean), num(p.sd)];
        row.extend(p.quantiles.iter().map(|&v| num(v)));
        row.push(p.ess.map(num).unwrap_or_default());
        t.row(row)?;
    }
    t.finish()
}
