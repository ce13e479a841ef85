//! Scenario files: one TOML document holding the environment, networks,
//! channel, budgets, clock, reception settings, training hyperparameters and
//! root seed. Unknown keys are rejected and every section is validated on
//! load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Dims, NetworkConfig, Networks};
use crate::envs::{ChannelConfig, EnvConfig};
use crate::error::{Error, Result};
use crate::seeds;
use crate::simulator::{ImportanceBuffer, Mode, SimConfig, TimestepClock};
use crate::trainer::TrainConfig;

/// Entropy threshold in bits, or `"grid"` to pick one at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Bits(f64),
    Search(SearchKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKeyword {
    Grid,
}

impl ThresholdSetting {
    /// Threshold used while training; with `"grid"`, half of the maximum
    /// action entropy.
    pub fn training_value(&self, n_actions: usize) -> f64 {
        match self {
            ThresholdSetting::Bits(b) => *b,
            ThresholdSetting::Search(_) => 0.5 * (n_actions as f64).log2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Hz per sender.
    pub bandwidth: f64,
    /// W per sender.
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceptionConfig {
    pub entropy_threshold: ThresholdSetting,
    pub avg_wait_fraction: f64,
    pub importance_buffer: ImportanceBuffer,
    pub mdp_discount: f64,
}

impl Default for ReceptionConfig {
    fn default() -> Self {
        Self {
            entropy_threshold: ThresholdSetting::Search(SearchKeyword::Grid),
            avg_wait_fraction: 0.3,
            importance_buffer: ImportanceBuffer::Current,
            mdp_discount: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    pub budgets: Budgets,
    pub clock: TimestepClock,
    #[serde(default)]
    pub reception: ReceptionConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::predator_prey()
    }
}

impl ScenarioConfig {
    /// The tuned desk-scale Predator-Prey scenario.
    pub fn predator_prey() -> Self {
        Self {
            seed: 0,
            mode: Mode::Vil2c,
            env: EnvConfig::predator_prey(),
            network: NetworkConfig::default(),
            channel: ChannelConfig::default(),
            budgets: Budgets {
                bandwidth: 2500.0,
                power: 1.0,
            },
            clock: TimestepClock {
                step_duration: 1.0,
                max_wait: 0.6,
            },
            reception: ReceptionConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn cooperative_navigation() -> Self {
        Self {
            env: EnvConfig::cooperative_navigation(),
            ..Self::predator_prey()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        if let ThresholdSetting::Bits(b) = self.reception.entropy_threshold {
            let max = (crate::envs::N_ACTIONS as f64).log2();
            if !(0.0..=max).contains(&b) {
                return Err(Error::Config(format!(
                    "reception: entropy_threshold {b} outside [0, {max:.4}] bits"
                )));
            }
        }
        self.sim_config().validate()
    }

    pub fn dims(&self) -> Dims {
        Dims::for_env(&self.env)
    }

    /// Simulator settings, with the training-time entropy threshold.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            env: self.env.clone(),
            channel: self.channel,
            mode: self.mode,
            bandwidth_budget: self.budgets.bandwidth,
            power_budget: self.budgets.power,
            clock: self.clock,
            entropy_threshold: self.reception.entropy_threshold.training_value(crate::envs::N_ACTIONS),
            avg_wait_fraction: self.reception.avg_wait_fraction,
            injected_latency: None,
            importance_buffer: self.reception.importance_buffer,
            compute_importance: self.mode == Mode::Vil2c,
            mdp_discount: self.reception.mdp_discount,
        }
    }

    /// Freshly initialized networks from the INIT stream of `seed`.
    pub fn init_networks(&self, seed: u64) -> Networks {
        let mut rng = seeds::rng(seeds::derive_seed(seed, seeds::stream::INIT));
        Networks::new(self.network.clone(), self.dims(), &mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            seed = 3
            mode = "avg"
            budgets = { bandwidth = 5000.0, power = 0.5 }
            clock = { step_duration = 1.0, max_wait = 0.4 }
            [reception]
            entropy_threshold = "grid"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Avg);
        assert_eq!(cfg.env, EnvConfig::predator_prey());
        assert_eq!(cfg.reception.entropy_threshold, ThresholdSetting::Search(SearchKeyword::Grid));
        assert!((cfg.sim_config().entropy_threshold - 0.5 * 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let base = ScenarioConfig::default().to_toml_string().unwrap();
        let unknown = base.replace("[env]", "[env]\nspeed_of_light = 1.0");
        assert!(matches!(ScenarioConfig::from_toml_str(&unknown), Err(Error::Config(_))));
        let top = format!("colour = \"red\"\n{base}");
        assert!(ScenarioConfig::from_toml_str(&top).is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.clock.max_wait = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.reception.entropy_threshold = ThresholdSetting::Bits(3.0);
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.env.observation_radii.pop();
        assert!(cfg.validate().is_err());
        let bad_mode = base.replace("mode = \"vil2c\"", "mode = \"telepathy\"");
        assert!(ScenarioConfig::from_toml_str(&bad_mode).is_err());
    }
}
