//! `fsvol report`: SVG charts plus the CSVs they were drawn from.
//!
//! Output files:
//! - `volatility_<series>.svg`: marginal volatility and communality bands
//! - `factor<j>.svg`: factor volatility bands
//! - `correlation_<date>.svg`: heatmap of the posterior median correlation
//!   (or the middle requested quantile when 0.5 is not requested)
//! - the long-format CSVs also written by `fit` under `summaries/`

use std::fs;
use std::path::Path;

use fsvol::data::quantile_violations;
use fsvol::mcmc::{covariance_series, CovarianceSeries, PosteriorStore};
use fsvol::{Error, Result, Violation, ViolationCode};
use serde_json::json;

use crate::manifest::{self, Manifest};
use crate::risk::resolve_store;
use crate::svg::{heatmap, line_chart, Line, Panel};
use crate::table::{self, num};
use crate::ReportArgs;

/// File-name-safe version of a series name or date.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn heatmap_quantile(qs: &[f64]) -> usize {
    qs.iter().position(|&q| q == 0.5).unwrap_or(qs.len() / 2)
}

pub fn run(args: ReportArgs) -> Result<()> {
    let started = manifest::now_utc();
    let store_dir = resolve_store(&args.store);
    let store = PosteriorStore::load(&store_dir)?;
    let qs = args.quantiles.clone().unwrap_or_else(|| store.config.model.quantiles.clone());
    let mut bad = quantile_violations(&qs);
    let dates = &store.panel.dates;
    let wanted = args.dates.clone().unwrap_or_else(|| dates.last().cloned().into_iter().collect());
    let mut at = Vec::new();
    for d in &wanted {
        match dates.iter().position(|x| x == d) {
            Some(t) => at.push(t),
            None => bad.push(Violation::new(
                ViolationCode::DateOutOfSample,
                format!(
                    "date `{d}` is not in the sample ({} to {})",
                    dates.first().map(String::as_str).unwrap_or(""),
                    dates.last().map(String::as_str).unwrap_or("")
                ),
            )),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }

    let series = covariance_series(&store, &qs)?;
    manifest::create_dir(&args.out)?;
    table::write_series(&args.out, &series)?;
    let files = write_charts(&args.out, &series, &at)?;

    let mut m = Manifest::new("report", started);
    m.seed = Some(store.provenance.seed);
    m.config = json!({ "quantiles": qs, "dates": wanted });
    m.inputs.push(manifest::store_input(&store_dir)?);
    m.notes = json!({ "charts": files, "summary_checks": series.checks });
    m.write(&args.out)
}

fn band_lines(qs: &[f64], f: impl Fn(usize) -> Vec<f64>) -> Vec<Line> {
    qs.iter().enumerate().map(|(k, &q)| Line { label: format!("q{}", num(q)), values: f(k) }).collect()
}

fn write_charts(dir: &Path, s: &CovarianceSeries, at: &[usize]) -> Result<Vec<String>> {
    let qs = &s.quantiles;
    let mut files = Vec::new();
    for (i, name) in s.names.iter().enumerate() {
        let panels = [
            Panel {
                title: format!("{name}: marginal volatility"),
                lines: band_lines(qs, |k| s.points.iter().map(|p| p.marginal_vol[k][i]).collect()),
            },
            Panel {
                title: format!("{name}: communality"),
                lines: band_lines(qs, |k| s.points.iter().map(|p| p.communalities[k][i]).collect()),
            },
        ];
        let file = format!("volatility_{}.svg", slug(name));
        write(&dir.join(&file), line_chart(name, &s.dates, &panels))?;
        files.push(file);
    }
    for j in 0..s.n_factors {
        let name = format!("factor{}", j + 1);
        let panels = [Panel {
            title: format!("{name}: volatility"),
            lines: band_lines(qs, |k| s.points.iter().map(|p| p.factor_vol[k][j]).collect()),
        }];
        let file = format!("{name}.svg");
        write(&dir.join(&file), line_chart(&name, &s.dates, &panels))?;
        files.push(file);
    }
    let k = heatmap_quantile(qs);
    for &t in at {
        let date = &s.dates[t];
        let title = format!("correlation at {date}, quantile {}", num(qs[k]));
        let file = format!("correlation_{}.svg", slug(date));
        write(&dir.join(&file), heatmap(&title, &s.names, &s.points[t].correlation[k]))?;
        files.push(file);
    }
    Ok(files)
}
