use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htm::DEFAULT_INTERLEAVING_CAP;

/// Event rewards. Events accumulate within one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub final_reached: f64,
    pub subtask_transition: f64,
    /// Per required object absent when a subtask completes.
    pub missing_object_on_transition: f64,
    /// Per object left on the workspace when the task completes.
    pub uncleaned_object_at_final: f64,
    pub preference_honored: f64,
    pub cost_hold: f64,
    pub cost_wait: f64,
    pub cost_other: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            final_reached: 100.0,
            subtask_transition: 10.0,
            missing_object_on_transition: -15.0,
            uncleaned_object_at_final: -15.0,
            preference_honored: 10.0,
            cost_hold: -2.0,
            cost_wait: 0.0,
            cost_other: -1.0,
        }
    }
}

/// Stochasticity of the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-step probability that each object's presence flips.
    pub object_toggle: f64,
    /// Per-step probability that each preference flips.
    pub pref_flip: f64,
    /// Probability that a bring or clean-up on a valid target succeeds.
    pub manipulation_success: f64,
}

impl NoiseConfig {
    /// Deterministic dynamics, used by the planner's search model.
    pub const NONE: NoiseConfig = NoiseConfig {
        object_toggle: 0.0,
        pref_flip: 0.0,
        manipulation_success: 1.0,
    };

    /// Simulated environment defaults.
    pub const ENVIRONMENT: NoiseConfig = NoiseConfig {
        object_toggle: 0.01,
        pref_flip: 0.0,
        manipulation_success: 0.95,
    };

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("object_toggle", self.object_toggle),
            ("pref_flip", self.pref_flip),
            ("manipulation_success", self.manipulation_success),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Probability { name, value: p });
            }
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::ENVIRONMENT
    }
}

/// Compiler settings: the file-backed part of a model definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompilerConfig {
    pub rewards: RewardParams,
    pub noise: NoiseConfig,
    pub gamma: f64,
    pub interleaving_cap: usize,
    /// Prior probability that each named preference is true; 0.5 when absent.
    pub preference_prior: std::collections::BTreeMap<String, f64>,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig {
            rewards: RewardParams::default(),
            noise: NoiseConfig::ENVIRONMENT,
            gamma: 0.98,
            interleaving_cap: DEFAULT_INTERLEAVING_CAP,
            preference_prior: Default::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("prior given for undeclared preference '{0}'")]
    UnknownPreference(String),
    #[error("prior for '{name}' must be a probability, got {value}")]
    Prior { name: String, value: f64 },
}
