//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use catmouse::control::{ControllerKind, ControllerParams};
use catmouse::env::EpisodeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub controllers: Vec<ControllerKind>,
    /// Episodes per seed.
    pub runs: usize,
    /// Base seeds; each expands into `runs` episode seeds shared by all
    /// controllers.
    pub seeds: Vec<u64>,
    /// Replayed Hill track; synthetic drift when absent.
    pub scenario: Option<PathBuf>,
    /// Policy weight file, required by the `rl` controller.
    pub policy: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Write one step log CSV per episode.
    pub write_logs: bool,
    pub threads: Option<usize>,
    pub episode: EpisodeConfig,
    pub controller: ControllerParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            controllers: vec![ControllerKind::Grs, ControllerKind::Dvo],
            runs: 100,
            seeds: vec![1, 2, 3],
            scenario: None,
            policy: None,
            output_dir: PathBuf::from("results"),
            write_logs: true,
            threads: None,
            episode: EpisodeConfig::default(),
            controller: ControllerParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `scenario` and `policy` paths are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scenario, &mut cfg.policy].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            bail!("at least one controller is required");
        }
        if self.runs == 0 || self.seeds.is_empty() {
            bail!("runs and seeds must be non-empty");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least one");
        }
        if self.controllers.contains(&ControllerKind::Rl) && self.policy.is_none() {
            bail!("the rl controller needs a policy weight file");
        }
        self.episode.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
