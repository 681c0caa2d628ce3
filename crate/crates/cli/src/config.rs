use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use cipherobs_core::pipeline::{build_design, Design, Mode, SystemParams};
use cipherobs_core::plantsim::ScenarioFile;

/// A run configuration. The scenario path is relative to the config file.
#[derive(Clone, Debug, Deserialize)]
pub struct RunConfig {
    pub scenario: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// LWE dimension used with `--full-lwe`.
    #[serde(rename = "full_N", default = "default_full_n")]
    pub full_lwe_dim: usize,
    #[serde(flatten)]
    pub params: SystemParams,
}

fn default_mode() -> Mode {
    Mode::Quantized
}

fn default_steps() -> usize {
    50
}

fn default_full_n() -> usize {
    4096
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.scenario.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.scenario = dir.join(&cfg.scenario);
            }
        }
        Ok(cfg)
    }

    /// Parameters with the LWE dimension chosen by `full_lwe`.
    pub fn system(&self, full_lwe: bool) -> SystemParams {
        let mut p = self.params.clone();
        if full_lwe {
            p.lwe_dim = self.full_lwe_dim;
        }
        p
    }

    pub fn design(&self, full_lwe: bool) -> Result<Design> {
        self.design_with(&self.system(full_lwe))
    }

    pub fn design_with(&self, sys: &SystemParams) -> Result<Design> {
        let (model, attacks) = ScenarioFile::load(&self.scenario)
            .and_then(ScenarioFile::into_parts)
            .with_context(|| format!("loading scenario {}", self.scenario.display()))?;
        build_design(model, attacks, sys).context("building the observer design")
    }
}
