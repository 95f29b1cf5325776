use std::fs::{self, File};
use std::path::{Path, PathBuf};

use fsvol::data::{compute_log_returns, demean, read_price_csv, ReturnPanel};
use fsvol::mcmc::{monitored_scalars, process_names, summarize, Chain, ChainDiagnostics, PosteriorStore};
use fsvol::{Error, Result, ViolationCode};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{self, FileConfig};
use crate::manifest::{self, Manifest};
use crate::table::{self, num, Table};
use crate::FitArgs;

fn chain_checkpoint(out: &Path, c: usize) -> PathBuf {
    Chain::checkpoint_dir(out).join(format!("chain-{c}"))
}

fn store_dir(out: &Path, c: usize) -> PathBuf {
    if c == 0 {
        out.join("store")
    } else {
        out.join("extra-chains").join(format!("chain-{c}")).join("store")
    }
}

fn start_chain(out: &Path, panel: &ReturnPanel, cfg: &FileConfig, c: usize, resume: bool) -> Result<Chain> {
    let cp = chain_checkpoint(out, c);
    if resume && cp.join("state.json").exists() {
        let chain = Chain::load_checkpoint(&cp)?;
        let ck = chain.config();
        if ck.n_series != panel.n_series() || ck.n_obs != panel.n_obs() {
            return Err(Error::invalid(
                ViolationCode::ShapeMismatch,
                format!("checkpoint in {} was written for a different input", cp.display()),
            ));
        }
        return Ok(chain);
    }
    Chain::with_index(panel, &cfg.model, &cfg.prior, c)
}

pub fn run(args: FitArgs) -> Result<()> {
    let started = manifest::now_utc();
    let mut cfg = config::load(args.config.as_deref())?;
    config::apply(&args.flags, &mut cfg);
    if cfg.run.chains == 0 {
        return Err(Error::invalid(ViolationCode::NonPositiveCount, "chains must be at least 1"));
    }

    let file = File::open(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let prices = read_price_csv(file)?;
    let panel = demean(&compute_log_returns(&prices)?);
    // fails fast on bad settings before anything touches the output directory
    fsvol::data::validate_config(&cfg.model, &cfg.prior, &panel)?;
    if args.resume && !Chain::checkpoint_dir(&args.out).exists() {
        return Err(Error::io(
            Chain::checkpoint_dir(&args.out),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint to resume from"),
        ));
    }
    manifest::create_dir(&args.out)?;

    let out = args.out.as_path();
    let results: Vec<(PosteriorStore, ChainDiagnostics)> = (0..cfg.run.chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = start_chain(out, &panel, &cfg, c, args.resume)?;
            let cp = chain_checkpoint(out, c);
            chain.run(Some(&cp))?;
            // a finished chain leaves a checkpoint too, so a resume after a
            // sibling's overrun does not redo it
            chain.save_checkpoint(&cp)?;
            chain.finish()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let checked = results[0].0.config.clone();
    for (c, (store, _)) in results.iter().enumerate() {
        let dir = store_dir(out, c);
        manifest::create_dir(&dir)?;
        store.save(&dir)?;
    }
    write_diagnostics(&out.join("diagnostics"), &results)?;

    let qs = &checked.model.quantiles;
    let summary = summarize(&results[0].0, qs)?;
    let sdir = out.join("summaries");
    manifest::create_dir(&sdir)?;
    table::write_series(&sdir, &summary.series)?;
    table::write_parameters(&sdir.join("parameters.csv"), &summary.parameters, qs)?;

    let checks = &summary.series.checks;
    if checks.total_violations() > 0 {
        eprintln!("warning: {} summary range check(s) failed; see manifest.json", checks.total_violations());
    }
    for (_, d) in &results {
        for v in d.violations() {
            eprintln!("warning: chain {}: {v}", d.chain);
        }
    }

    let _ = fs::remove_dir_all(Chain::checkpoint_dir(out));

    let mut m = Manifest::new("fit", started);
    m.seed = Some(checked.model.seed);
    m.config = json!({ "model": checked.model, "prior": checked.prior, "run": cfg.run });
    m.inputs.push(manifest::input(&args.input)?);
    m.notes = json!({
        "n_series": checked.n_series,
        "n_obs": checked.n_obs,
        "resumed": args.resume,
        "chains": results.iter().map(|(s, d)| json!({
            "chain": d.chain,
            "seed": d.seed,
            "store": store_dir(Path::new("."), d.chain),
            "retained": s.len(),
            "runtime_secs": d.runtime_secs,
        })).collect::<Vec<_>>(),
        "summary_checks": checks,
    });
    m.write(out)
}

fn write_diagnostics(dir: &Path, results: &[(PosteriorStore, ChainDiagnostics)]) -> Result<()> {
    manifest::create_dir(dir)?;
    let mut ess = Table::create(&dir.join("ess.csv"), &["chain", "name", "ess", "constant"])?;
    let mut acc = Table::create(&dir.join("acceptance.csv"), &["chain", "process", "phi", "sigma"])?;
    let mut chains =
        Table::create(&dir.join("chains.csv"), &["chain", "seed", "sweeps", "retained", "clamp_count"])?;
    for (store, d) in results {
        let c = d.chain.to_string();
        for e in &d.ess {
            ess.row([c.clone(), e.name.clone(), num(e.ess), e.constant.to_string()])?;
        }
        for (k, name) in process_names(store).into_iter().enumerate() {
            acc.row([c.clone(), name, num(d.phi_acceptance[k]), num(d.sigma_acceptance[k])])?;
        }
        chains.row([c.clone(), d.seed.to_string(), d.sweeps.to_string(), d.retained.to_string(), d.clamp_count.to_string()])?;

        let scalars = monitored_scalars(store);
        let mut header = vec!["draw".to_string()];
        header.extend(scalars.iter().map(|(n, _)| n.clone()));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut trace = Table::create(&dir.join(format!("trace_chain{}.csv", d.chain)), &refs)?;
        for i in 0..store.len() {
            trace.row(std::iter::once(i.to_string()).chain(scalars.iter().map(|(_, v)| num(v[i]))))?;
        }
        trace.finish()?;
    }
    ess.finish()?;
    acc.finish()?;
    chains.finish()
}
