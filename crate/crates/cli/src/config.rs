//! Run configuration: one TOML file covering generation, training, and
//! evaluation, echoed into every output directory so a run is reproducible
//! from its artifacts alone.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use deadend_core::sac::{SacConfig, TrainConfig};
use deadend_core::scenario::GenParams;
use deadend_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub gen: GenSection,
    pub sac: SacConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSection {
    /// Scenarios per batch.
    pub count: usize,
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// Replay buffer ring size, transitions.
    pub buffer_capacity: usize,
    /// When positive, train on freshly generated scenarios (enables the
    /// curriculum) instead of a fixed batch file.
    pub generate_count: usize,
    pub run: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Episodes per controller/scenario pair.
    pub repetitions: usize,
    /// Scenario cap; zero means the whole batch.
    pub maps: usize,
    /// Controller tokens: `ftg`, `hybrid-astar`, or a checkpoint path.
    pub controllers: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            gen: GenSection::default(),
            sac: SacConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            sim: SimConfig::default(),
        }
    }
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            count: 8,
            params: GenParams::default(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            buffer_capacity: 200_000,
            generate_count: 0,
            run: TrainConfig::default(),
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            repetitions: 3,
            maps: 0,
            controllers: vec!["ftg".into(), "hybrid-astar".into()],
        }
    }
}

impl RunConfig {
    /// Defaults when `path` is `None`, otherwise the parsed file. A bad
    /// config file is an invocation problem, so failures exit with 2;
    /// unknown schema versions are refused rather than guessed at.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| crate::usage(format!("reading config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| crate::usage(format!("parsing config {}: {e}", path.display())))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(crate::usage(format!(
                "config {} has schema version {}, expected {}",
                path.display(),
                config.schema_version,
                CONFIG_SCHEMA_VERSION
            )));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing effective config")
    }

    /// Write the effective config next to a run's outputs.
    pub fn echo(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)
            .with_context(|| format!("writing effective config {}", path.display()))
    }
}

/// Decorrelated seed for one named stage, so `gen`, `train`, and `eval`
/// draw from independent streams of a single run seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &b in name.as_bytes() {
        z = (z ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
