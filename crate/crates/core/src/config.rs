//! The simulator configuration file.
//!
//! One JSON document configures the arena, the blimps, the radio, the
//! experiment grid and the live service. Every field has a default, so `{}`
//! is a valid file; unknown keys anywhere are rejected.

use crate::comms::RadioModel;
use crate::control::Gains;
use crate::dynamics::BlimpParams;
use crate::world::{AgentConfig, Scenario, WorldConfig, WorldSetup};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MAX_BLIMPS: usize = 4;
pub const MAX_BALLOONS: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("config does not match the schema: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Replaces parts of the shared agent config for one blimp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    /// 1-based blimp id.
    pub id: u16,
    #[serde(default)]
    pub params: Option<BlimpParams>,
    #[serde(default)]
    pub gains: Option<Gains>,
}

/// The pickup grid: every `(n_blimps, n_balloons)` pair is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PickupGrid {
    pub n_blimps: Vec<usize>,
    pub n_balloons: Vec<usize>,
    /// Simulated seconds per run.
    pub duration: f64,
}

impl Default for PickupGrid {
    fn default() -> Self {
        Self { n_blimps: vec![1, 2, 3, 4], n_balloons: vec![8], duration: 300.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DeliveryRun {
    pub n_blimps: usize,
    pub n_balloons: usize,
    pub duration: f64,
}

impl Default for DeliveryRun {
    fn default() -> Self {
        Self { n_blimps: 4, n_balloons: 8, duration: 300.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run `k` uses seed `first_seed + k`.
    pub first_seed: u64,
    pub pickup: PickupGrid,
    /// `null` skips the delivery scenario.
    pub delivery: Option<DeliveryRun>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { first_seed: 1, pickup: PickupGrid::default(), delivery: Some(DeliveryRun::default()) }
    }
}

/// The world driven by `sim serve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub n_blimps: usize,
    pub n_balloons: usize,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { n_blimps: 4, n_balloons: 8, scenario: Scenario::Delivery, seed: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub world: WorldConfig,
    /// Shared by every blimp before overrides.
    pub agent: AgentConfig,
    pub overrides: Vec<AgentOverride>,
    pub radio: RadioModel,
    pub experiment: ExperimentConfig,
    pub serve: ServeConfig,
}

pub fn check_counts(n_blimps: usize, n_balloons: usize) -> Result<(), ConfigError> {
    if !(1..=MAX_BLIMPS).contains(&n_blimps) {
        return Err(ConfigError::Invalid(format!("n_blimps must be 1..={MAX_BLIMPS}, got {n_blimps}")));
    }
    if n_balloons > MAX_BALLOONS {
        return Err(ConfigError::Invalid(format!("n_balloons must be 0..={MAX_BALLOONS}, got {n_balloons}")));
    }
    Ok(())
}

fn check_duration(d: f64) -> Result<(), ConfigError> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("duration must be positive, got {d}")))
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn schema() -> schemars::schema::RootSchema {
        schemars::schema_for!(SimConfig)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = ConfigError::Invalid;
        self.world.validate().map_err(bad)?;
        self.agent.validate().map_err(bad)?;
        self.radio.validate().map_err(bad)?;
        for o in &self.overrides {
            if o.id == 0 || o.id as usize > MAX_BLIMPS {
                return Err(bad(format!("override for unknown blimp id {}", o.id)));
            }
            self.agent_for(o.id).validate().map_err(|e| bad(format!("blimp {}: {e}", o.id)))?;
        }
        let p = &self.experiment.pickup;
        check_duration(p.duration)?;
        for &b in &p.n_blimps {
            for &n in &p.n_balloons {
                check_counts(b, n)?;
            }
        }
        if let Some(d) = &self.experiment.delivery {
            check_duration(d.duration)?;
            check_counts(d.n_blimps, d.n_balloons)?;
        }
        check_counts(self.serve.n_blimps, self.serve.n_balloons)
    }

    /// The agent config of blimp `id` after overrides.
    pub fn agent_for(&self, id: u16) -> AgentConfig {
        let mut a = self.agent.clone();
        for o in self.overrides.iter().filter(|o| o.id == id) {
            if let Some(p) = &o.params {
                a.params = p.clone();
            }
            if let Some(g) = &o.gains {
                a.gains = g.clone();
            }
        }
        a
    }

    pub fn setup(&self, n_blimps: usize, n_balloons: usize, scenario: Scenario, seed: u64) -> Result<WorldSetup, ConfigError> {
        check_counts(n_blimps, n_balloons)?;
        Ok(WorldSetup {
            world: self.world.clone(),
            agents: (1..=n_blimps as u16).map(|id| self.agent_for(id)).collect(),
            n_balloons,
            radio: self.radio.clone(),
            scenario,
            seed,
        })
    }
}
