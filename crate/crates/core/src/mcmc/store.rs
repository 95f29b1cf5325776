//! Retained posterior draws and their on-disk form.
//!
//! A store directory holds `meta.json` (configuration, provenance, the
//! fitted panel) and `draws.bin`. The binary file is laid out column-major
//! by variable: all draws of the first scalar, then all draws of the
//! second, and so on, as little-endian `f64`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CheckedConfig, LatentPaths, ParameterDraw, ReturnPanel};
use crate::error::{Error, Result};

pub const SAMPLER_VERSION: &str = concat!("fsvol ", env!("CARGO_PKG_VERSION"), " sampler/1");
const MAGIC: &[u8; 8] = b"FSVDRAWS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub sampler_version: String,
    pub chain: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStore {
    pub draws: Vec<(ParameterDraw, LatentPaths)>,
    pub config: CheckedConfig,
    pub provenance: Provenance,
    pub panel: ReturnPanel,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    config: CheckedConfig,
    provenance: Provenance,
    panel: ReturnPanel,
    n_draws: usize,
}

/// Shape of one flattened draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawLayout {
    pub m: usize,
    pub r: usize,
    pub t: usize,
}

impl DrawLayout {
    pub fn of(config: &CheckedConfig) -> Self {
        DrawLayout { m: config.n_series, r: config.model.factors, t: config.n_obs }
    }

    pub fn len(&self) -> usize {
        let p = self.m + self.r;
        3 * p + self.m * self.r + p * (self.t + 1) + self.r * self.t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self, params: &ParameterDraw, latent: &LatentPaths, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&params.mu);
        out.extend_from_slice(&params.phi);
        out.extend_from_slice(&params.sigma);
        out.extend_from_slice(params.loadings.as_slice());
        for p in &latent.h {
            out.extend_from_slice(p);
        }
        for p in &latent.f {
            out.extend_from_slice(p);
        }
    }

    pub fn unflatten(&self, v: &[f64]) -> (ParameterDraw, LatentPaths) {
        let p = self.m + self.r;
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &v[at..at + n];
            at += n;
            s.to_vec()
        };
        let mu = take(p);
        let phi = take(p);
        let sigma = take(p);
        let loadings = DMatrix::from_vec(self.m, self.r, take(self.m * self.r));
        let h = (0..p).map(|_| take(self.t + 1)).collect();
        let f = (0..self.r).map(|_| take(self.t)).collect();
        (ParameterDraw { mu, phi, sigma, loadings }, LatentPaths { h, f })
    }
}

impl PosteriorStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn layout(&self) -> DrawLayout {
        DrawLayout::of(&self.config)
    }

    /// Every draw satisfies its type invariants and the sign convention.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let expected = self.config.model.retained();
        if self.draws.len() != expected {
            out.push(format!("{} draws stored, expected {expected}", self.draws.len()));
        }
        for (k, (p, l)) in self.draws.iter().enumerate() {
            for v in p.violations().into_iter().chain(l.violations()) {
                out.push(format!("draw {k}: {v}"));
            }
            if !crate::factor::signs_identified(&p.loadings) {
                out.push(format!("draw {k}: sign convention violated"));
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            panel: self.panel.clone(),
            n_draws: self.draws.len(),
        };
        let meta_path = dir.join("meta.json");
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Format { path: meta_path.clone(), detail: e.to_string() })?;
        fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
        write_draws(&dir.join("draws.bin"), self.layout(), &self.draws)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: meta_path.clone(), detail: e.to_string() })?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: meta_path,
                detail: format!("store format {} not supported", meta.format_version),
            });
        }
        let layout = DrawLayout::of(&meta.config);
        let draws = read_draws(&dir.join("draws.bin"), layout)?;
        if draws.len() != meta.n_draws {
            return Err(Error::Format { path: dir.join("draws.bin"), detail: "draw count differs from meta.json".into() });
        }
        Ok(PosteriorStore { draws, config: meta.config, provenance: meta.provenance, panel: meta.panel })
    }
}

pub(crate) fn write_draws(path: &Path, layout: DrawLayout, draws: &[(ParameterDraw, LatentPaths)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = draws.len();
    let width = layout.len();
    let mut flat = Vec::with_capacity(n * width);
    let mut buf = Vec::with_capacity(width);
    for (p, l) in draws {
        layout.flatten(p, l, &mut buf);
        flat.extend_from_slice(&buf);
    }
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    for d in [layout.m, layout.r, layout.t, n] {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    for v in 0..width {
        for d in 0..n {
            w.write_all(&flat[d * width + v].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub(crate) fn read_draws(path: &Path, layout: DrawLayout) -> Result<Vec<(ParameterDraw, LatentPaths)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |detail: &str| Error::Format { path: path.to_path_buf(), detail: detail.to_string() };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a draws file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
    if u32::from_le_bytes(b4) != FORMAT_VERSION {
        return Err(bad("unsupported draws format version"));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        *d = u64::from_le_bytes(b8) as usize;
    }
    if dims[..3] != [layout.m, layout.r, layout.t] {
        return Err(bad("draw dimensions differ from configuration"));
    }
    let n = dims[3];
    let width = layout.len();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != n * width * 8 {
        return Err(bad("draws payload has the wrong length"));
    }
    let mut flat = vec![0.0; n * width];
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let (v, d) = (k / n.max(1), k % n.max(1));
        flat[d * width + v] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((0..n).map(|d| layout.unflatten(&flat[d * width..(d + 1) * width])).collect())
}
