//! `fsvol risk`: VaR and CoVaR tables from a fitted store.
//!
//! Query file:
//!
//! ```toml
//! levels = [0.01, 0.05, 0.95, 0.99]
//! covar_mode = "median-sigma"     # or "per-draw"
//!
//! [[query]]
//! target = "series01"
//! single = "series02"             # optional
//! set = ["series03", "series04"]  # optional
//! ```
//!
//! Without `[[query]]` entries every series is a target, conditioned on the
//! first other series and on the first four other series.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use fsvol::mcmc::PosteriorStore;
use fsvol::risk::{exceedance_backtest, risk_table, CovarMode, RiskSeries, RiskSpec, DEFAULT_LEVELS};
use fsvol::{Error, Result, Violation, ViolationCode};
use serde::Deserialize;
use serde_json::json;

use crate::manifest::{self, Manifest};
use crate::table::{num, Table};
use crate::RiskArgs;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QueryFile {
    levels: Option<Vec<f64>>,
    covar_mode: Option<CovarMode>,
    query: Vec<Query>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Query {
    target: String,
    single: Option<String>,
    #[serde(default)]
    set: Vec<String>,
}

/// Accepts either a store directory or the `fit` output directory holding one.
pub fn resolve_store(path: &Path) -> PathBuf {
    if !path.join("meta.json").exists() && path.join("store").join("meta.json").exists() {
        path.join("store")
    } else {
        path.to_path_buf()
    }
}

fn default_specs(m: usize, levels: &[f64]) -> Vec<RiskSpec> {
    (0..m)
        .map(|i| {
            let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            RiskSpec {
                target: i,
                single: others.first().copied(),
                set: others.iter().copied().take(4).collect(),
                levels: levels.to_vec(),
            }
        })
        .collect()
}

fn resolve(names: &[String], queries: &[Query], levels: &[f64]) -> Result<Vec<RiskSpec>> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut bad = Vec::new();
    let mut lookup = |n: &str| match index.get(n) {
        Some(&i) => i,
        None => {
            bad.push(Violation::new(
                ViolationCode::UnknownSeries,
                format!("unknown series `{n}`; the store has {}", names.join(", ")),
            ));
            usize::MAX
        }
    };
    let specs: Vec<RiskSpec> = queries
        .iter()
        .map(|q| RiskSpec {
            target: lookup(&q.target),
            single: q.single.as_deref().map(&mut lookup),
            set: q.set.iter().map(|n| lookup(n)).collect(),
            levels: levels.to_vec(),
        })
        .collect();
    if bad.is_empty() {
        Ok(specs)
    } else {
        Err(Error::Invalid(bad))
    }
}

pub fn run(args: RiskArgs) -> Result<()> {
    let started = manifest::now_utc();
    let qf: QueryFile = match &args.query {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Format { path: p.clone(), detail: e.to_string() })?
        }
        None => QueryFile::default(),
    };
    let levels = args.levels.clone().or(qf.levels).unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let mode = args.covar_mode.map(CovarMode::from).or(qf.covar_mode).unwrap_or_default();

    let store_dir = resolve_store(&args.store);
    let store = PosteriorStore::load(&store_dir)?;
    let names = &store.panel.names;
    let specs = if qf.query.is_empty() {
        default_specs(names.len(), &levels)
    } else {
        resolve(names, &qf.query, &levels)?
    };
    let bad: Vec<Violation> = specs.iter().flat_map(|s| s.violations(names.len())).collect();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }

    let table = risk_table(&store, &specs, mode)?;
    let dir = args.out.join("risk");
    manifest::create_dir(&dir)?;
    let mut used: HashMap<String, usize> = HashMap::new();
    let mut bt = Table::create(
        &dir.join("backtest.csv"),
        &["file", "target", "level", "n", "count", "rate", "rate_lo", "rate_hi", "expected_lo", "expected_hi", "calibrated"],
    )?;
    let mut files = Vec::new();
    for rs in &table {
        let target = &names[rs.spec.target];
        let k = used.entry(target.clone()).or_insert(0);
        *k += 1;
        let file = if *k == 1 { format!("{target}.csv") } else { format!("{target}-{k}.csv") };
        write_series(&dir.join(&file), &store, rs)?;
        let returns = store.panel.series(rs.spec.target);
        for (l, &q) in rs.spec.levels.iter().enumerate() {
            let b = exceedance_backtest(returns, &rs.var[l], q)?;
            bt.row([
                file.clone(),
                target.clone(),
                num(q),
                b.n.to_string(),
                b.count.to_string(),
                num(b.rate),
                num(b.rate_interval.0),
                num(b.rate_interval.1),
                num(b.expected_interval.0),
                num(b.expected_interval.1),
                b.calibrated().to_string(),
            ])?;
        }
        files.push(json!({
            "file": file,
            "target": target,
            "single": rs.spec.single.map(|j| names[j].clone()),
            "set": rs.spec.set.iter().map(|&j| names[j].clone()).collect::<Vec<_>>(),
        }));
    }
    bt.finish()?;

    let repaired: Vec<&str> = table.first().map(|r| r.repaired.as_slice()).unwrap_or_default().iter().map(|&t| store.panel.dates[t].as_str()).collect();
    if !repaired.is_empty() {
        eprintln!("note: median covariance repaired to PSD at {} date(s); see manifest.json", repaired.len());
    }

    let mut m = Manifest::new("risk", started);
    m.seed = Some(store.provenance.seed);
    m.config = json!({ "levels": levels, "covar_mode": mode });
    m.inputs.push(manifest::store_input(&store_dir)?);
    if let Some(p) = &args.query {
        m.inputs.push(manifest::input(p)?);
    }
    m.notes = json!({ "queries": files, "psd_repaired_dates": repaired });
    m.write(&args.out)
}

/// One row per date: VaR, CoVaR given one series, CoVaR given the set, the
/// demeaned return, and exceedance flags against the 5% and 1% VaR.
fn write_series(path: &Path, store: &PosteriorStore, rs: &RiskSeries) -> Result<()> {
    let lv = &rs.spec.levels;
    let mut header = vec!["date".to_string()];
    for kind in ["var", "covar_single", "covar_set"] {
        header.extend(lv.iter().map(|q| format!("{kind}_{q}")));
    }
    header.extend(["return".into(), "exceed_5".into(), "exceed_1".into()]);
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(path, &refs)?;
    let returns = store.panel.series(rs.spec.target);
    // with no single conditioning series the column repeats the VaR
    let single = rs.covar_single.as_ref().unwrap_or(&rs.var);
    for (d, date) in store.panel.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(rs.var.iter().map(|v| num(v[d])));
        row.extend(single.iter().map(|v| num(v[d])));
        row.extend(rs.covar_set.iter().map(|v| num(v[d])));
        row.push(num(returns[d]));
        row.push(u8::from(returns[d] < rs.var_5[d]).to_string());
        row.push(u8::from(returns[d] < rs.var_1[d]).to_string());
        t.row(row)?;
    }
    t.finish()
}
