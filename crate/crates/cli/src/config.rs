//! Run configuration file.
//!
//! ```toml
//! [model]
//! factors = 4
//! n_draws = 100000
//! n_burnin = 50000
//! thin = 100
//! seed = 42
//! quantiles = [0.1, 0.5, 0.9]
//! ar_sign = "plus"        # or "minus"
//! parallel = false
//! # max_seconds = 3600.0
//!
//! [prior]
//! mu_mean = 0.0
//! mu_var = 100.0
//! phi_a = 20.0
//! phi_b = 1.5
//! sigma2_shape = 0.5
//! sigma2_rate = 0.5
//! loading_var = 1.0
//!
//! [run]
//! chains = 1
//! ```
//!
//! Every key is optional; missing keys take the values shown.

use std::fs;
use std::path::Path;

use fsvol::data::{ModelConfig, PriorConfig};
use fsvol::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::ModelFlags;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chains: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { chains: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub run: RunConfig,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn apply(flags: &ModelFlags, cfg: &mut FileConfig) {
    let m = &mut cfg.model;
    if let Some(v) = flags.seed {
        m.seed = v;
    }
    if let Some(v) = flags.draws {
        m.n_draws = v;
    }
    if let Some(v) = flags.burnin {
        m.n_burnin = v;
    }
    if let Some(v) = flags.thin {
        m.thin = v;
    }
    if let Some(v) = flags.factors {
        m.factors = v;
    }
    if let Some(v) = &flags.quantiles {
        m.quantiles = v.clone();
    }
    if let Some(v) = flags.ar_sign {
        m.ar_sign = v.into();
    }
    if flags.parallel {
        m.parallel = true;
    }
    if let Some(v) = flags.max_seconds {
        m.max_seconds = Some(v);
    }
    if let Some(v) = flags.chains {
        cfg.run.chains = v;
    }
}
