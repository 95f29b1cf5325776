use std::fs;
use std::path::{Path, PathBuf};

use fsvol::mcmc::SAMPLER_VERSION;
use fsvol::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// `manifest.json` written into every output directory.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub sampler_version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputHash>,
    pub started_at: String,
    pub finished_at: String,
    /// Command-specific facts such as run times or repair counts.
    pub notes: Value,
}

impl Manifest {
    pub fn new(command: &'static str, started_at: String) -> Self {
        Manifest {
            tool: "fsvol",
            version: env!("CARGO_PKG_VERSION"),
            sampler_version: SAMPLER_VERSION,
            command,
            seed: None,
            config: Value::Null,
            inputs: Vec::new(),
            started_at,
            finished_at: String::new(),
            notes: Value::Null,
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished_at = now_utc();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// SHA-256 over the given files, in order.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn input(path: &Path) -> Result<InputHash> {
    Ok(InputHash { path: path.to_path_buf(), sha256: hash_files(&[path.to_path_buf()])? })
}

pub fn store_input(store_dir: &Path) -> Result<InputHash> {
    Ok(InputHash {
        path: store_dir.to_path_buf(),
        sha256: hash_files(&[store_dir.join("meta.json"), store_dir.join("draws.bin")])?,
    })
}

/// Current UTC time as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn now_utc() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
