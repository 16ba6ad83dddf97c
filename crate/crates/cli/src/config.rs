use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Flat experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// Level of the Gaussian measure and of the energy.
    #[serde(default = "default_level")]
    pub n: usize,
    /// Ladder of projection cutoffs.
    #[serde(rename = "N", default)]
    pub ladder: Vec<usize>,
    /// Ambient cutoff; defaults to `3·max(N)+1` (times the refinement factor
    /// for `converge`).
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(rename = "R", default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,

    /// Initial datum: `"random"`, `"plane_wave"` or `"state"`.
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub wave_k: Option<i64>,
    /// `[re, im]` of the plane-wave amplitude.
    #[serde(default)]
    pub amplitude: Option<[f64; 2]>,
    /// Snapshot file for `data = "state"`.
    #[serde(default)]
    pub state: Option<PathBuf>,
    #[serde(default)]
    pub intervals: Option<usize>,
    /// Also run at `dt/2` and `dt/4` and report the error ratio.
    #[serde(default)]
    pub refine: Option<bool>,
    /// A number, `"median"` (empirical median of `‖u‖_{H^s}`) or `"inf"`.
    #[serde(default)]
    pub radius: Option<Radius>,
    /// Finite-difference step; defaults to `1e-4 / (1 + ‖u‖²_{H¹})`.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub families: Option<Vec<String>>,
    #[serde(default)]
    pub kinds: Option<Vec<String>>,
    /// Run the `E*` mean-square estimates as part of `decay`.
    #[serde(default)]
    pub estar: Option<bool>,
    /// `M = m_factor · N` in `converge`.
    #[serde(default)]
    pub m_factor: Option<usize>,
    /// How many sampled fields `sample` writes as snapshots.
    #[serde(default)]
    pub max_states: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Value(f64),
    Named(String),
}

fn default_level() -> usize {
    2
}

fn default_r() -> f64 {
    5.0
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed config file together with its raw JSON, which goes into the
/// manifest unchanged.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Value,
}

impl LoadedConfig {
    /// Reads a config file or a previous `run.json`; for a manifest the
    /// embedded config is used with the seed that run resolved to.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let (raw, manifest_seed) = match value.get("manifest_version") {
            Some(_) => {
                let cfg = value.get("config").cloned().context("manifest without a config")?;
                (cfg, value.get("resolved_seed").and_then(Value::as_u64))
            }
            None => (value, None),
        };
        let mut config: RunConfig = serde_json::from_value(raw.clone()).context("invalid config")?;
        if let Some(seed) = manifest_seed {
            config.seed = seed;
        }
        Ok(LoadedConfig { config, raw })
    }
}

/// Config < `MKDV_SEED` < `--seed`.
pub fn resolve_seed(config: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(e) = env {
        return e.trim().parse().with_context(|| format!("MKDV_SEED is not an integer: {e:?}"));
    }
    Ok(config)
}

impl RunConfig {
    pub fn max_ladder(&self) -> Option<usize> {
        self.ladder.iter().copied().max()
    }

    pub fn ladder_or_fail(&self) -> Result<&[usize]> {
        if self.ladder.is_empty() {
            bail!("config needs a non-empty \"N\" ladder");
        }
        Ok(&self.ladder)
    }

    /// Ambient cutoff, checked against `3·top+1` when `top` is given.
    pub fn ambient(&self, top: Option<usize>) -> Result<usize> {
        let need = top.map(|n| 3 * n + 1);
        let k = self.k.or(need).context("config needs \"K\"")?;
        if let Some(need) = need {
            if k < need {
                bail!("K = {k} is below 3·N+1 = {need}");
            }
        }
        Ok(k)
    }

    pub fn first_s(&self, default: f64) -> f64 {
        self.s.first().copied().unwrap_or(default)
    }
}
