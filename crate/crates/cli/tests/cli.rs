use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use tempfile::TempDir;

fn fsvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsvol")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const FIT_ARGS: [&str; 10] = ["--factors", "1", "--draws", "2000", "--burnin", "500", "--thin", "2", "--seed", "7"];

/// Simulated tiny panel plus one fit of it, shared by the read-only tests.
struct Fitted {
    _dir: TempDir,
    prices: PathBuf,
    fit: PathBuf,
}

fn fitted() -> &'static Fitted {
    static CELL: OnceLock<Fitted> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let sim = dir.path().join("sim");
        assert_eq!(code(&fsvol(&["simulate", "--fixture", "tiny", "--out", p(&sim)])), 0);
        let prices = sim.join("prices.csv");
        let fit = dir.path().join("fit");
        let mut args = vec!["fit", "--input", p(&prices), "--out", p(&fit)];
        args.extend(FIT_ARGS);
        let o = fsvol(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Fitted { _dir: dir, prices, fit }
    })
}

#[test]
fn simulate_paper_shape_has_expected_shape_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&fsvol(&["simulate", "--fixture", "paper-shape", "--out", p(out)])), 0);
    }
    let (header, rows) = read_csv(&a.join("prices.csv"));
    assert_eq!(header.len(), 13);
    assert_eq!(header[0], "date");
    assert_eq!(rows.len(), 426);
    for f in ["prices.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 12);
}

#[test]
fn simulate_seed_override_changes_prices() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fsvol(&["simulate", "--fixture", "tiny", "--out", p(&a)]);
    fsvol(&["simulate", "--fixture", "tiny", "--out", p(&b), "--seed", "99", "--n-obs", "50"]);
    let (_, rows) = read_csv(&b.join("prices.csv"));
    assert_eq!(rows.len(), 51);
    assert_ne!(fs::read(a.join("prices.csv")).unwrap(), fs::read(b.join("prices.csv")).unwrap());
}

#[test]
fn simulate_from_truth_file_reproduces_fixture() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fsvol(&["simulate", "--fixture", "tiny", "--out", p(&a)]);
    let o = fsvol(&["simulate", "--truth", p(&a.join("truth.json")), "--out", p(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(a.join("prices.csv")).unwrap(), fs::read(b.join("prices.csv")).unwrap());
}

#[test]
fn simulate_unknown_fixture_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = fsvol(&["simulate", "--fixture", "huge", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown-fixture"));
}

#[test]
fn fit_writes_store_diagnostics_summaries_and_manifest() {
    let f = fitted();
    for rel in [
        "store/meta.json",
        "store/draws.bin",
        "diagnostics/ess.csv",
        "diagnostics/acceptance.csv",
        "diagnostics/chains.csv",
        "diagnostics/trace_chain0.csv",
        "summaries/volatility.csv",
        "summaries/factor_volatility.csv",
        "summaries/communality.csv",
        "summaries/correlation.csv",
        "summaries/covariance.csv",
        "summaries/parameters.csv",
        "manifest.json",
    ] {
        assert!(f.fit.join(rel).is_file(), "missing {rel}");
    }
    assert!(!f.fit.join("checkpoint").exists());

    let (header, rows) = read_csv(&f.fit.join("diagnostics/trace_chain0.csv"));
    assert_eq!(rows.len(), 1000);
    // draw index, mu, phi and sigma per process, loadings, two log-variance states per process
    assert_eq!(header.len(), 1 + 3 + 2 * 4 + 3 + 2 * 4);

    let (_, ess) = read_csv(&f.fit.join("diagnostics/ess.csv"));
    assert_eq!(ess.len(), header.len() - 1);
    for row in &ess {
        let v: f64 = row[2].parse().unwrap();
        assert!((0.0..=1000.0).contains(&v), "{row:?}");
    }

    // 200 dates x 3 quantiles x 3 series
    let (_, vol) = read_csv(&f.fit.join("summaries/volatility.csv"));
    assert_eq!(vol.len(), 200 * 3 * 3);

    let m: serde_json::Value = serde_json::from_slice(&fs::read(f.fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "fit");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["model"]["n_draws"], 2000);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["started_at"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn fit_tiny_default_length_is_quick() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let o = fsvol(&["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--factors", "1", "--draws", "2000", "--burnin", "1000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn fit_is_deterministic_end_to_end() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let mut args = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path())];
    args.extend(FIT_ARGS);
    assert_eq!(code(&fsvol(&args)), 0);
    for rel in [
        "store/draws.bin",
        "diagnostics/ess.csv",
        "diagnostics/acceptance.csv",
        "diagnostics/trace_chain0.csv",
        "summaries/covariance.csv",
        "summaries/parameters.csv",
    ] {
        assert_eq!(fs::read(f.fit.join(rel)).unwrap(), fs::read(dir.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn fit_parallel_flag_gives_identical_draws() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let mut args = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--parallel"];
    args.extend(FIT_ARGS);
    assert_eq!(code(&fsvol(&args)), 0);
    for rel in ["diagnostics/trace_chain0.csv", "summaries/covariance.csv"] {
        assert_eq!(fs::read(f.fit.join(rel)).unwrap(), fs::read(dir.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn fit_extra_chains_differ_from_chain_zero() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let mut args = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--chains", "2"];
    args.extend(FIT_ARGS);
    assert_eq!(code(&fsvol(&args)), 0);
    let extra = dir.path().join("extra-chains/chain-1/store/draws.bin");
    assert!(extra.is_file());
    // chain 0 is the single-chain run
    assert_eq!(fs::read(f.fit.join("store/draws.bin")).unwrap(), fs::read(dir.path().join("store/draws.bin")).unwrap());
    assert_ne!(fs::read(extra).unwrap(), fs::read(dir.path().join("store/draws.bin")).unwrap());
    let (_, chains) = read_csv(&dir.path().join("diagnostics/chains.csv"));
    assert_eq!(chains.len(), 2);
}

#[test]
fn fit_budget_overrun_exits_3_and_resume_matches_uninterrupted_run() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let mut args = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--max-seconds", "0.05"];
    args.extend(FIT_ARGS);
    let o = fsvol(&args);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("--resume"));
    assert!(dir.path().join("checkpoint/chain-0/state.json").is_file());
    assert!(!dir.path().join("store").exists());

    let mut resume = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--resume"];
    resume.extend(FIT_ARGS);
    let mut rounds = 0;
    loop {
        let o = fsvol(&resume);
        rounds += 1;
        match code(&o) {
            0 => break,
            3 if rounds < 10_000 => continue,
            c => panic!("exit {c}: {}", stderr(&o)),
        }
    }
    assert_eq!(fs::read(f.fit.join("store/draws.bin")).unwrap(), fs::read(dir.path().join("store/draws.bin")).unwrap());
    assert!(!dir.path().join("checkpoint").exists());
}

#[test]
fn fit_resume_without_checkpoint_exits_4() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let mut args = vec!["fit", "--input", p(&f.prices), "--out", p(dir.path()), "--resume"];
    args.extend(FIT_ARGS);
    let o = fsvol(&args);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn fit_input_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let headerless = dir.path().join("headerless.csv");
    fs::write(&headerless, "2020-01-01,1,2,3\n2020-01-02,1,2,3\n").unwrap();
    let o = fsvol(&["fit", "--input", p(&headerless), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("malformed-csv"), "{}", stderr(&o));
    assert!(!out.exists());

    let f = fitted();
    let o = fsvol(&["fit", "--input", p(&f.prices), "--out", p(&out), "--factors", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("factor-count"), "{}", stderr(&o));

    let o = fsvol(&["fit", "--input", p(&f.prices), "--out", p(&out), "--draws", "1001", "--thin", "10"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("thin-divisibility"), "{}", stderr(&o));

    let o = fsvol(&["fit", "--input", p(&dir.path().join("absent.csv")), "--out", p(&out)]);
    assert_eq!(code(&o), 4);

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nfactorz = 1\n").unwrap();
    let o = fsvol(&["fit", "--input", p(&f.prices), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fit_config_file_is_honoured() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[model]\nfactors = 1\nn_draws = 2000\nn_burnin = 500\nthin = 2\nseed = 7\n").unwrap();
    let out = dir.path().join("out");
    let o = fsvol(&["fit", "--input", p(&f.prices), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(f.fit.join("store/draws.bin")).unwrap(), fs::read(out.join("store/draws.bin")).unwrap());
}

#[test]
fn risk_writes_one_column_per_level_and_type() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let o = fsvol(&["risk", "--store", p(&f.fit), "--out", p(dir.path()), "--levels", "0.01,0.05,0.95,0.99"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("risk/series01.csv"));
    for kind in ["var_", "covar_single_", "covar_set_"] {
        assert_eq!(header.iter().filter(|h| h.starts_with(kind)).count(), 4, "{kind}");
    }
    assert_eq!(rows.len(), 200);
    let (_, bt) = read_csv(&dir.path().join("risk/backtest.csv"));
    assert_eq!(bt.len(), 3 * 4);
    for row in &rows {
        let v: Vec<f64> = row[1..13].iter().map(|x| x.parse().unwrap()).collect();
        // VaR at q and 1 - q are mirror images
        assert!((v[0] + v[3]).abs() < 1e-12 && (v[1] + v[2]).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn risk_with_empty_set_equals_var() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let q = dir.path().join("q.toml");
    fs::write(&q, "levels = [0.05]\n[[query]]\ntarget = \"series02\"\n").unwrap();
    let o = fsvol(&["risk", "--store", p(&f.fit.join("store")), "--query", p(&q), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("risk/series02.csv"));
    assert_eq!(&header[1..4], ["var_0.05", "covar_single_0.05", "covar_set_0.05"]);
    for row in rows {
        assert_eq!(row[1], row[2]);
        assert_eq!(row[1], row[3]);
    }
}

#[test]
fn risk_query_errors_exit_2() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let cases = [
        ("[[query]]\ntarget = \"series01\"\nset = [\"series01\", \"series02\"]\n", "overlapping-sets"),
        ("[[query]]\ntarget = \"series01\"\nsingle = \"series01\"\n", "overlapping-sets"),
        ("[[query]]\ntarget = \"nope\"\n", "unknown-series"),
        ("levels = [1.5]\n", "quantile-range"),
    ];
    for (k, (text, want)) in cases.iter().enumerate() {
        let q = dir.path().join(format!("q{k}.toml"));
        fs::write(&q, text).unwrap();
        let o = fsvol(&["risk", "--store", p(&f.fit), "--query", p(&q), "--out", p(dir.path())]);
        assert_eq!(code(&o), 2, "{text}");
        assert!(stderr(&o).contains(want), "{text}: {}", stderr(&o));
    }
}

#[test]
fn risk_per_draw_mode_runs() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let o = fsvol(&["risk", "--store", p(&f.fit), "--out", p(dir.path()), "--covar-mode", "per-draw", "--levels", "0.05"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["covar_mode"], "per-draw");
}

fn svg_values(doc: &roxmltree::Document) -> HashMap<String, Vec<f64>> {
    doc.descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| {
            let label = n.attribute("data-label").unwrap().to_string();
            let vals = n.attribute("data-values").unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
            (label, vals)
        })
        .collect()
}

#[test]
fn report_svgs_are_valid_and_match_csv() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let o = fsvol(&["report", "--store", p(&f.fit), "--out", p(dir.path()), "--dates", "2000-01-17,2007-09-03"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut n_svg = 0;
    for e in fs::read_dir(dir.path()).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "svg") {
            let text = fs::read_to_string(&path).unwrap();
            roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n_svg += 1;
        }
    }
    assert_eq!(n_svg, 3 + 1 + 2);

    // marginal volatility of series02 at each quantile, from the CSV
    let (_, rows) = read_csv(&dir.path().join("volatility.csv"));
    let mut from_csv: HashMap<String, Vec<f64>> = HashMap::new();
    for r in rows.iter().filter(|r| r[1] == "series02") {
        from_csv.entry(format!("q{}", r[2])).or_default().push(r[3].parse().unwrap());
    }
    let text = fs::read_to_string(dir.path().join("volatility_series02.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let panel = doc
        .descendants()
        .find(|n| n.attribute("data-title") == Some("series02: marginal volatility"))
        .unwrap();
    let sub = roxmltree::Document::parse(&text[panel.range()]).unwrap();
    let from_svg = svg_values(&sub);
    assert_eq!(from_svg.len(), 3);
    for (label, vals) in &from_svg {
        let want = &from_csv[label];
        assert_eq!(vals.len(), want.len());
        for (a, b) in vals.iter().zip(want) {
            assert!((a - b).abs() <= 1e-9, "{label}: {a} vs {b}");
        }
    }

    // heatmap cells against the median correlation rows for the same date
    let (_, cor) = read_csv(&dir.path().join("correlation.csv"));
    let text = fs::read_to_string(dir.path().join("correlation_2007-09-03.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let mut checked = 0;
    for r in cor.iter().filter(|r| r[0] == "2007-09-03" && r[3] == "0.5") {
        let want: f64 = r[4].parse().unwrap();
        let cell = doc
            .descendants()
            .find(|n| n.attribute("data-row") == Some(&r[1]) && n.attribute("data-col") == Some(&r[2]))
            .unwrap();
        let got: f64 = cell.attribute("data-value").unwrap().parse().unwrap();
        assert!((got - want).abs() <= 1e-9);
        checked += 1;
    }
    assert_eq!(checked, 3);
}

#[test]
fn report_is_deterministic() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&fsvol(&["report", "--store", p(&f.fit), "--out", p(out)])), 0);
    }
    for e in fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn report_date_outside_sample_exits_2() {
    let f = fitted();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rep");
    let o = fsvol(&["report", "--store", p(&f.fit), "--out", p(&out), "--dates", "2000-01-03"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("date-out-of-sample"));
    assert!(!out.exists());
}

#[test]
fn missing_store_exits_4() {
    let dir = TempDir::new().unwrap();
    let o = fsvol(&["report", "--store", p(&dir.path().join("nothing")), "--out", p(dir.path())]);
    assert_eq!(code(&o), 4);
}
