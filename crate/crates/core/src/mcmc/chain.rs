//! One Markov chain over the full factor SV posterior.
//!
//! A sweep updates, in this order: every idiosyncratic log-variance block,
//! every factor log-variance block, the factor scores at every `t`, and
//! every row of the loadings matrix. Blocks inside each stage only read the
//! state left by the previous stage, so they may run on the rayon pool;
//! each block draws from its own `(seed, sweep, block)` substream, which
//! keeps parallel and sequential scheduling bit-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{monitored_scalars, ChainDiagnostics, EssEntry};
use super::ess::effective_sample_size;
use super::store::{read_draws, write_draws, DrawLayout, PosteriorStore, Provenance, SAMPLER_VERSION};
use crate::data::{validate_config, CheckedConfig, LatentPaths, ModelConfig, ParameterDraw, PriorConfig, ReturnPanel};
use crate::error::{Error, Result, ViolationCode};
use crate::factor::{identify_signs_draw, sample_factors, sample_loadings_row};
use crate::rng::{substream, INIT_SWEEP};
use crate::sv::{
    default_offset, linearize, sample_h_path, sample_indicators, sample_params, Likelihood, MixtureTable, SvParams,
    LOG_VARIANCE_BOUND,
};

const CHECKPOINT_VERSION: u32 = 1;

/// Seed of chain `index`; chain 0 uses the configured seed unchanged.
pub fn chain_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        return seed;
    }
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub params: ParameterDraw,
    pub latent: LatentPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Counters {
    phi_accepted: Vec<u64>,
    sigma_accepted: Vec<u64>,
    clamp_count: u64,
}

struct SvBlockOut {
    h: Vec<f64>,
    params: SvParams,
    phi_accepted: bool,
    sigma_accepted: bool,
    clamped: usize,
}

pub struct Chain {
    panel: ReturnPanel,
    config: CheckedConfig,
    chain_index: usize,
    seed: u64,
    state: ChainState,
    sweeps_done: u64,
    retained: Vec<(ParameterDraw, LatentPaths)>,
    counters: Counters,
    elapsed: f64,
    table: MixtureTable,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    format_version: u32,
    sampler_version: String,
    panel: ReturnPanel,
    config: CheckedConfig,
    chain_index: usize,
    seed: u64,
    state: ChainState,
    sweeps_done: u64,
    n_retained: usize,
    counters: Counters,
    elapsed: f64,
}

impl Chain {
    pub fn new(panel: &ReturnPanel, model: &ModelConfig, prior: &PriorConfig) -> Result<Self> {
        Self::with_index(panel, model, prior, 0)
    }

    /// Chain `index` of a multi-chain run, seeded by [`chain_seed`].
    pub fn with_index(panel: &ReturnPanel, model: &ModelConfig, prior: &PriorConfig, index: usize) -> Result<Self> {
        let config = validate_config(model, prior, panel)?;
        if !panel.demeaned {
            return Err(Error::invalid(ViolationCode::NotDemeaned, "the sampler expects a demeaned return panel"));
        }
        let seed = chain_seed(config.model.seed, index);
        let state = initial_state(panel, &config, seed);
        let p = config.n_processes();
        Ok(Chain {
            panel: panel.clone(),
            chain_index: index,
            seed,
            state,
            sweeps_done: 0,
            retained: Vec::with_capacity(config.model.retained()),
            counters: Counters { phi_accepted: vec![0; p], sigma_accepted: vec![0; p], clamp_count: 0 },
            elapsed: 0.0,
            table: MixtureTable::ten_component(),
            config,
        })
    }

    pub fn config(&self) -> &CheckedConfig {
        &self.config
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps_done
    }

    pub fn total_sweeps(&self) -> u64 {
        (self.config.model.n_burnin + self.config.model.n_draws) as u64
    }

    pub fn is_complete(&self) -> bool {
        self.sweeps_done >= self.total_sweeps()
    }

    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    /// Runs at most `n` further sweeps.
    pub fn advance(&mut self, n: u64) -> Result<()> {
        let start = Instant::now();
        let mut done = 0;
        while done < n && !self.is_complete() {
            self.sweep()?;
            done += 1;
        }
        self.elapsed += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Runs to completion. When the configured wall-clock budget runs out
    /// first, a checkpoint is written to `checkpoint` (if given) and
    /// [`Error::BudgetExceeded`] is returned; the chain can be resumed.
    pub fn run(&mut self, checkpoint: Option<&Path>) -> Result<()> {
        let start = Instant::now();
        let before = self.elapsed;
        while !self.is_complete() {
            if let Err(e) = self.sweep() {
                self.elapsed = before + start.elapsed().as_secs_f64();
                return Err(e);
            }
            self.elapsed = before + start.elapsed().as_secs_f64();
            if let Some(max) = self.config.model.max_seconds {
                if self.elapsed > max && !self.is_complete() {
                    let path = match checkpoint {
                        Some(dir) => {
                            self.save_checkpoint(dir)?;
                            Some(dir.to_path_buf())
                        }
                        None => None,
                    };
                    return Err(Error::BudgetExceeded { sweep: self.sweeps_done, checkpoint: path });
                }
            }
        }
        Ok(())
    }

    fn block_name(&self, p: usize) -> String {
        let m = self.config.n_series;
        if p < m {
            format!("idiosyncratic log variance `{}`", self.panel.names[p])
        } else {
            format!("factor {} log variance", p - m + 1)
        }
    }

    fn numerical(&self, block: String, detail: impl Into<String>) -> Error {
        Error::Numerical { sweep: self.sweeps_done, block, detail: detail.into() }
    }

    fn sv_block(&self, p: usize) -> std::result::Result<SvBlockOut, String> {
        let m = self.config.n_series;
        let sweep = self.sweeps_done;
        let mut rng = substream(self.seed, sweep, p as u64);
        let params = &self.state.params;
        let latent = &self.state.latent;
        let resid: Vec<f64> = if p < m {
            let y = self.panel.series(p);
            let r = self.config.model.factors;
            (0..y.len())
                .map(|t| y[t] - (0..r).map(|j| params.loadings[(p, j)] * latent.f[j][t]).sum::<f64>())
                .collect()
        } else {
            latent.f[p - m].clone()
        };
        let lin = linearize(&resid, default_offset(&resid));
        let current = SvParams { mu: params.mu[p], phi: params.phi[p], sigma: params.sigma[p] };
        let indicators = sample_indicators(&lin.z, &latent.h[p][1..], &self.table, &mut rng);
        let lik = Likelihood::Mixture { z: &lin.z, indicators: &indicators, table: &self.table };
        let sign = self.config.model.ar_sign;
        let draw = sample_h_path(lik, &current, sign, &mut rng).map_err(|e| e.to_string())?;
        let mut h = draw.h;
        let up = sample_params(&mut h, lik, &current, &self.config.prior, p >= m, sign, &mut rng)
            .map_err(|e| e.to_string())?;
        let mut clamped = draw.clamped;
        for v in h.iter_mut() {
            if !v.is_finite() {
                return Err(format!("non-finite log variance after interweaving with {:?}", up.params));
            }
            if v.abs() > LOG_VARIANCE_BOUND {
                *v = v.clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND);
                clamped += 1;
            }
        }
        Ok(SvBlockOut {
            h,
            params: up.params,
            phi_accepted: up.phi_accepted,
            sigma_accepted: up.sigma_accepted,
            clamped,
        })
    }

    fn sweep(&mut self) -> Result<()> {
        let m = self.config.n_series;
        let r = self.config.model.factors;
        let n_obs = self.config.n_obs;
        let parallel = self.config.model.parallel;
        let sweep = self.sweeps_done;

        let outs: Vec<_> = if parallel {
            (0..m + r).into_par_iter().map(|p| self.sv_block(p)).collect()
        } else {
            (0..m + r).map(|p| self.sv_block(p)).collect()
        };
        for (p, out) in outs.into_iter().enumerate() {
            let out = out.map_err(|d| self.numerical(self.block_name(p), d))?;
            self.state.latent.h[p] = out.h;
            self.state.params.mu[p] = out.params.mu;
            self.state.params.phi[p] = out.params.phi;
            self.state.params.sigma[p] = out.params.sigma;
            self.counters.phi_accepted[p] += out.phi_accepted as u64;
            self.counters.sigma_accepted[p] += out.sigma_accepted as u64;
            self.counters.clamp_count += out.clamped as u64;
        }

        if r > 0 {
            let seed = self.seed;
            let state = &self.state;
            let panel = &self.panel;
            let factor_at = |t: usize| {
                let mut rng = substream(seed, sweep, (m + r + t) as u64);
                let y: Vec<f64> = (0..m).map(|i| panel.returns[(t, i)]).collect();
                let u: Vec<f64> = (0..m).map(|i| state.latent.h[i][t + 1].exp()).collect();
                let v: Vec<f64> = (0..r).map(|j| state.latent.h[m + j][t + 1].exp()).collect();
                sample_factors(&y, &state.params.loadings, &u, &v, &mut rng).map_err(|e| (t, e.0))
            };
            let scores: Vec<_> = if parallel {
                (0..n_obs).into_par_iter().map(factor_at).collect()
            } else {
                (0..n_obs).map(factor_at).collect()
            };
            for (t, ft) in scores.into_iter().enumerate() {
                let ft = ft.map_err(|(t, k)| {
                    self.numerical("factor scores".into(), format!("singular precision at t = {}, pivot {k}", t + 1))
                })?;
                for (fj, v) in self.state.latent.f.iter_mut().zip(ft.iter()) {
                    fj[t] = *v;
                }
            }

            let state = &self.state;
            let loading_var = self.config.prior.loading_var;
            let row_at = |i: usize| {
                let mut rng = substream(seed, sweep, (m + r + n_obs + i) as u64);
                sample_loadings_row(panel.series(i), &state.latent.f, &state.latent.h[i][1..], loading_var, &mut rng)
                    .map_err(|e| (i, e.0))
            };
            let rows: Vec<_> =
                if parallel { (0..m).into_par_iter().map(row_at).collect() } else { (0..m).map(row_at).collect() };
            for (i, row) in rows.into_iter().enumerate() {
                let row = row.map_err(|(i, k)| {
                    self.numerical(format!("loadings row `{}`", self.panel.names[i]), format!("singular precision, pivot {k}"))
                })?;
                for (j, v) in row.iter().enumerate() {
                    self.state.params.loadings[(i, j)] = *v;
                }
            }
            if self.state.latent.f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(self.numerical("factor scores".into(), "non-finite factor score"));
            }
            if self.state.params.loadings.iter().any(|v| !v.is_finite()) {
                return Err(self.numerical("loadings".into(), "non-finite loading"));
            }
        }

        self.sweeps_done += 1;
        let burnin = self.config.model.n_burnin as u64;
        if self.sweeps_done > burnin && (self.sweeps_done - burnin).is_multiple_of(self.config.model.thin as u64) {
            let mut params = self.state.params.clone();
            let mut latent = self.state.latent.clone();
            identify_signs_draw(&mut params, &mut latent);
            let bad: Vec<String> = params.violations().into_iter().chain(latent.violations()).collect();
            if !bad.is_empty() {
                return Err(Error::Numerical { sweep, block: "retained draw".into(), detail: bad.join("; ") });
            }
            self.retained.push((params, latent));
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cp = CheckpointState {
            format_version: CHECKPOINT_VERSION,
            sampler_version: SAMPLER_VERSION.to_string(),
            panel: self.panel.clone(),
            config: self.config.clone(),
            chain_index: self.chain_index,
            seed: self.seed,
            state: self.state.clone(),
            sweeps_done: self.sweeps_done,
            n_retained: self.retained.len(),
            counters: self.counters.clone(),
            elapsed: self.elapsed,
        };
        let path = dir.join("state.json");
        let json = serde_json::to_vec(&cp).map_err(|e| Error::Format { path: path.clone(), detail: e.to_string() })?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        write_draws(&dir.join("retained.bin"), DrawLayout::of(&self.config), &self.retained)
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let path = dir.join("state.json");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let cp: CheckpointState =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: path.clone(), detail: e.to_string() })?;
        if cp.format_version != CHECKPOINT_VERSION || cp.sampler_version != SAMPLER_VERSION {
            return Err(Error::Format {
                path,
                detail: format!("checkpoint written by `{}` (format {})", cp.sampler_version, cp.format_version),
            });
        }
        let retained = read_draws(&dir.join("retained.bin"), DrawLayout::of(&cp.config))?;
        if retained.len() != cp.n_retained {
            return Err(Error::Format { path: dir.join("retained.bin"), detail: "retained draw count mismatch".into() });
        }
        Ok(Chain {
            panel: cp.panel,
            config: cp.config,
            chain_index: cp.chain_index,
            seed: cp.seed,
            state: cp.state,
            sweeps_done: cp.sweeps_done,
            retained,
            counters: cp.counters,
            elapsed: cp.elapsed,
            table: MixtureTable::ten_component(),
        })
    }

    pub fn diagnostics(&self, store: &PosteriorStore) -> ChainDiagnostics {
        let sweeps = self.sweeps_done.max(1) as f64;
        let ess = monitored_scalars(store)
            .into_iter()
            .map(|(name, values)| match effective_sample_size(&values) {
                Ok(e) => EssEntry { name, ess: e.value, constant: e.constant },
                Err(_) => EssEntry { name, ess: 0.0, constant: false },
            })
            .collect();
        ChainDiagnostics {
            chain: self.chain_index,
            seed: self.seed,
            sweeps: self.sweeps_done,
            retained: store.len(),
            ess,
            phi_acceptance: self.counters.phi_accepted.iter().map(|&a| a as f64 / sweeps).collect(),
            sigma_acceptance: self.counters.sigma_accepted.iter().map(|&a| a as f64 / sweeps).collect(),
            clamp_count: self.counters.clamp_count,
            runtime_secs: self.elapsed,
        }
    }

    /// Consumes a completed chain.
    pub fn finish(self) -> Result<(PosteriorStore, ChainDiagnostics)> {
        if !self.is_complete() {
            return Err(Error::Numerical {
                sweep: self.sweeps_done,
                block: "finish".into(),
                detail: format!("chain stopped after {} of {} sweeps", self.sweeps_done, self.total_sweeps()),
            });
        }
        let store = PosteriorStore {
            draws: self.retained.clone(),
            config: self.config.clone(),
            provenance: Provenance {
                seed: self.seed,
                sampler_version: SAMPLER_VERSION.to_string(),
                chain: self.chain_index,
            },
            panel: self.panel.clone(),
        };
        let diag = self.diagnostics(&store);
        Ok((store, diag))
    }

    /// Path of the checkpoint directory conventionally used next to a store.
    pub fn checkpoint_dir(out: &Path) -> PathBuf {
        out.join("checkpoint")
    }
}

fn initial_state(panel: &ReturnPanel, config: &CheckedConfig, seed: u64) -> ChainState {
    let m = config.n_series;
    let r = config.model.factors;
    let n_obs = config.n_obs;
    let mut rng = substream(seed, INIT_SWEEP, 0);
    let loadings = DMatrix::from_fn(m, r, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    // Factor scores start from their prior N(0, e^0) rather than at zero: a
    // zero path would pin the factor log variances at the offset floor.
    let mut rng = substream(seed, INIT_SWEEP, 1);
    let f = (0..r).map(|_| (0..n_obs).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let mut mu = vec![0.0; m + r];
    for (i, mu_i) in mu.iter_mut().enumerate().take(m) {
        let y = panel.series(i);
        let mean = y.iter().sum::<f64>() / n_obs as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_obs as f64 - 1.0);
        *mu_i = var.max(1e-12).ln();
    }
    ChainState {
        params: ParameterDraw { mu, phi: vec![0.8; m + r], sigma: vec![0.2; m + r], loadings },
        latent: LatentPaths { h: vec![vec![0.0; n_obs + 1]; m + r], f },
    }
}

/// Runs one chain to completion and returns its store.
pub fn run_chain(panel: &ReturnPanel, model: &ModelConfig, prior: &PriorConfig) -> Result<PosteriorStore> {
    run_chain_with_diagnostics(panel, model, prior).map(|(s, _)| s)
}

pub fn run_chain_with_diagnostics(
    panel: &ReturnPanel,
    model: &ModelConfig,
    prior: &PriorConfig,
) -> Result<(PosteriorStore, ChainDiagnostics)> {
    let mut chain = Chain::new(panel, model, prior)?;
    chain.run(None)?;
    chain.finish()
}

/// Runs `n_chains` independent chains on the rayon pool; chain `c` is seeded
/// by [`chain_seed`]. Results are in chain order.
pub fn run_chains(
    panel: &ReturnPanel,
    model: &ModelConfig,
    prior: &PriorConfig,
    n_chains: usize,
) -> Result<Vec<(PosteriorStore, ChainDiagnostics)>> {
    (0..n_chains.max(1))
        .into_par_iter()
        .map(|c| {
            let mut chain = Chain::with_index(panel, model, prior, c)?;
            chain.run(None)?;
            chain.finish()
        })
        .collect()
}
