//! JSON experiment configuration. Every key is optional; command-line flags
//! take precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "QCOPIES_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Option<usize>,
    pub epsilon0: Option<f64>,
    pub epsilon: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
    pub fidelity: Option<f64>,
    pub state: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub schedule: Option<String>,
    pub out: Option<PathBuf>,
    pub compare: Option<String>,
    pub bins: Option<usize>,
    pub t_initial: Option<Vec<u64>>,
    pub initial_p: Option<String>,
    pub ratios: Option<Vec<f64>>,
    pub repeats: Option<usize>,
    pub rate: Option<f64>,
    pub switch_cost: Option<f64>,
    pub h: Option<f64>,
    pub delta: Option<f64>,
    pub copies: Option<Vec<u64>>,
    pub p1: Option<f64>,
    pub elements: Option<Vec<usize>>,
    pub max_iterations: Option<usize>,
    pub rate8: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Seed precedence: flag, config file, `QCOPIES_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> Result<u64> {
    if let Some(s) = flag.or(cfg.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
