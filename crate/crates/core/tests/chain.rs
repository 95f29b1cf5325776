use fsvol::data::{demean, ModelConfig, PriorConfig, ReturnPanel};
use fsvol::mcmc::{run_chain, run_chain_with_diagnostics, Chain};
use fsvol::sim::{fixture, simulate_panel};
use fsvol::{Error, ViolationCode};

fn tiny_panel() -> ReturnPanel {
    let (panel, _) = simulate_panel(&fixture("tiny").unwrap()).unwrap();
    demean(&panel)
}

fn short(draws: usize, burnin: usize, thin: usize) -> ModelConfig {
    ModelConfig { factors: 1, n_draws: draws, n_burnin: burnin, thin, seed: 7, ..ModelConfig::default() }
}

#[test]
fn same_seed_gives_identical_store() {
    let panel = tiny_panel();
    let cfg = short(200, 50, 2);
    let a = run_chain(&panel, &cfg, &PriorConfig::default()).unwrap();
    let b = run_chain(&panel, &cfg, &PriorConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 100);
    assert!(a.violations().is_empty(), "{:?}", a.violations());
    let c = run_chain(&panel, &ModelConfig { seed: 8, ..cfg }, &PriorConfig::default()).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn parallel_scheduling_matches_sequential() {
    let panel = tiny_panel();
    let cfg = short(60, 20, 3);
    let seq = run_chain(&panel, &cfg, &PriorConfig::default()).unwrap();
    let par = run_chain(&panel, &ModelConfig { parallel: true, ..cfg }, &PriorConfig::default()).unwrap();
    assert_eq!(seq.draws, par.draws);
}

#[test]
fn checkpoint_resume_is_bit_identical() {
    let panel = tiny_panel();
    let cfg = short(100, 30, 5);
    let full = run_chain(&panel, &cfg, &PriorConfig::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut chain = Chain::new(&panel, &cfg, &PriorConfig::default()).unwrap();
    chain.advance(57).unwrap();
    chain.save_checkpoint(dir.path()).unwrap();
    drop(chain);
    let mut resumed = Chain::load_checkpoint(dir.path()).unwrap();
    assert_eq!(resumed.sweeps_done(), 57);
    resumed.run(None).unwrap();
    let (store, _) = resumed.finish().unwrap();
    assert_eq!(store, full);
}

#[test]
fn budget_overrun_checkpoints_and_resumes() {
    let panel = tiny_panel();
    let cfg = short(100, 30, 5);
    let full = run_chain(&panel, &cfg, &PriorConfig::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut chain = Chain::new(&panel, &ModelConfig { max_seconds: Some(1e-9), ..cfg.clone() }, &PriorConfig::default())
        .unwrap();
    match chain.run(Some(dir.path())) {
        Err(Error::BudgetExceeded { sweep, checkpoint }) => {
            assert_eq!(sweep, 1);
            assert_eq!(checkpoint.as_deref(), Some(dir.path()));
        }
        other => panic!("expected a budget error, got {other:?}"),
    }
    let mut resumed = Chain::load_checkpoint(dir.path()).unwrap();
    // lifting the budget does not touch the sampler state
    let mut steps = 0;
    while !resumed.is_complete() {
        resumed.advance(1).unwrap();
        steps += 1;
    }
    assert_eq!(steps, 129);
    let (store, _) = resumed.finish().unwrap();
    assert_eq!(store.draws, full.draws);
}

#[test]
fn store_round_trips_through_disk() {
    let panel = tiny_panel();
    let store = run_chain(&panel, &short(40, 10, 2), &PriorConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    store.save(dir.path()).unwrap();
    let back = fsvol::mcmc::PosteriorStore::load(dir.path()).unwrap();
    assert_eq!(back, store);
}

#[test]
fn raw_panel_is_rejected() {
    let (panel, _) = simulate_panel(&fixture("tiny").unwrap()).unwrap();
    let err = run_chain(&panel, &short(20, 0, 1), &PriorConfig::default()).unwrap_err();
    assert_eq!(err.codes(), vec![ViolationCode::NotDemeaned]);
}

#[test]
fn zero_factors_runs_independent_sv_models() {
    let panel = tiny_panel();
    let cfg = ModelConfig { factors: 0, ..short(100, 50, 1) };
    let (store, diag) = run_chain_with_diagnostics(&panel, &cfg, &PriorConfig::default()).unwrap();
    assert_eq!(store.len(), 100);
    assert!(store.draws.iter().all(|(p, l)| p.loadings.ncols() == 0 && l.f.is_empty()));
    assert!(diag.violations().is_empty(), "{:?}", diag.violations());
}

#[test]
fn diagnostics_cover_monitored_scalars() {
    let panel = tiny_panel();
    let (store, diag) = run_chain_with_diagnostics(&panel, &short(400, 100, 2), &PriorConfig::default()).unwrap();
    // 3 mu + 4 phi + 4 sigma + 3 loadings + 2 snapshots for each of 4 processes
    assert_eq!(diag.ess.len(), 3 + 4 + 4 + 3 + 8);
    assert_eq!(diag.retained, store.len());
    assert_eq!(diag.sweeps, 500);
    assert!(diag.violations().is_empty(), "{:?}", diag.violations());
    assert_eq!(diag.phi_acceptance.len(), 4);
}
