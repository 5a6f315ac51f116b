//! Experiment configuration file: one JSON object with optional sections
//! `world`, `synth`, `dataset`, `memory`, `reward`, `train` and `run`.
//! Missing sections and fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetConfig;
use crate::error::{invalid, Result};
use crate::harness::RunConfig;
use crate::memory::MemoryPolicy;
use crate::reward::RewardConfig;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;
use crate::world::WorldConfig;

/// Environment variable that overrides the seed of whatever is being run.
pub const SEED_ENV: &str = "AIRNAV_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub synth: SynthConfig,
    pub dataset: DatasetConfig,
    /// Overrides `run.memory` when present.
    pub memory: Option<MemoryPolicy>,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.reward.validate()?;
        self.train.validate()?;
        self.run.validate()?;
        self.dataset.split_ratios.validate()?;
        Ok(())
    }

    /// Run settings with the `memory` section applied.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            memory: self.memory.unwrap_or(self.run.memory),
            ..self.run.clone()
        }
    }
}

/// Reads [`SEED_ENV`], if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(invalid(format!("{SEED_ENV}: {e}"))),
    }
}

/// Precedence: explicit flag, then the environment, then the config value.
pub fn resolve_seed(flag: Option<u64>, config_value: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(config_value),
    })
}
