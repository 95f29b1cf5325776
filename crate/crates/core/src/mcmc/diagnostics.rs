use serde::{Deserialize, Serialize};

use super::store::PosteriorStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssEntry {
    pub name: String,
    pub ess: f64,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub seed: u64,
    pub sweeps: u64,
    pub retained: usize,
    pub ess: Vec<EssEntry>,
    /// Per process, series first then factors.
    pub phi_acceptance: Vec<f64>,
    pub sigma_acceptance: Vec<f64>,
    pub clamp_count: u64,
    pub runtime_secs: f64,
}

impl ChainDiagnostics {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.ess {
            let ok = if e.constant { e.ess == 0.0 } else { e.ess > 0.0 && e.ess <= self.retained as f64 };
            if !ok {
                out.push(format!("ess of `{}` = {} outside (0, {}]", e.name, e.ess, self.retained));
            }
        }
        for (k, a) in self.phi_acceptance.iter().chain(&self.sigma_acceptance).enumerate() {
            if !(0.0..=1.0).contains(a) {
                out.push(format!("acceptance rate #{k} = {a}"));
            }
        }
        out
    }
}

/// Names used for process `p` in tables: the series name or `factor<j>`.
pub fn process_names(store: &PosteriorStore) -> Vec<String> {
    let r = store.config.model.factors;
    store.panel.names.iter().cloned().chain((1..=r).map(|j| format!("factor{j}"))).collect()
}

/// Every static parameter with its retained trace. Factor levels are fixed
/// at zero and omitted.
pub fn static_parameters(store: &PosteriorStore) -> Vec<(String, Vec<f64>)> {
    let m = store.config.n_series;
    let r = store.config.model.factors;
    let names = process_names(store);
    let trace = |f: &dyn Fn(&crate::data::ParameterDraw) -> f64| store.draws.iter().map(|(p, _)| f(p)).collect();
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate().take(m) {
        out.push((format!("mu[{name}]"), trace(&|p| p.mu[i])));
    }
    for (k, name) in names.iter().enumerate() {
        out.push((format!("phi[{name}]"), trace(&|p| p.phi[k])));
    }
    for (k, name) in names.iter().enumerate() {
        out.push((format!("sigma[{name}]"), trace(&|p| p.sigma[k])));
    }
    for j in 0..r {
        for (i, name) in names.iter().enumerate().take(m) {
            out.push((format!("lambda[{name},factor{}]", j + 1), trace(&|p| p.loadings[(i, j)])));
        }
    }
    out
}

/// Static parameters plus log-variance snapshots at `T/2` and `T`.
pub fn monitored_scalars(store: &PosteriorStore) -> Vec<(String, Vec<f64>)> {
    let t = store.config.n_obs;
    let mut out = static_parameters(store);
    for (k, name) in process_names(store).iter().enumerate() {
        for at in [t / 2, t] {
            let values = store.draws.iter().map(|(_, l)| l.h[k][at]).collect();
            out.push((format!("h[{name},{at}]"), values));
        }
    }
    out
}
