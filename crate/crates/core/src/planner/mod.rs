//! Online planning: POMCP search over action-observation histories, and the
//! particle filter that tracks the belief between executed steps.

mod belief;
mod pomcp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htm::ActionToken;
use crate::model::Observation;

pub use belief::{belief_marginals, update_belief, Belief, BeliefError, BeliefMarginals};
pub use pomcp::{plan_action, search, ActionStats, SearchResult};

/// How far a simulation looks ahead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// Stop after this many model steps.
    MaxTransitions(u32),
    /// Stop after this many completed subtasks.
    MaxSubtasks(u32),
}

/// Default policy used below the search tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RolloutPolicy {
    /// Uniform over actions that are not certain to fail from the particle.
    UniformValid,
    /// Uniform over all actions.
    Uniform,
    /// Bring a missing object the current subtask needs, else clean up an
    /// object no remaining subtask needs, else try any action that completes
    /// some subtask of the model. Choices within a tier are uniform. The last
    /// tier ignores the particle's instance and preferences, so rollouts do
    /// not know more than the robot could.
    #[default]
    Supportive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub simulations: u32,
    /// UCB1 exploration constant.
    pub exploration: f64,
    pub gamma: f64,
    pub horizon: Horizon,
    /// Hard cap on simulated steps, whatever the horizon.
    pub max_depth: u32,
    pub rollout: RolloutPolicy,
    pub particles: usize,
    /// Share of particles drawn fresh when the filter depletes.
    pub reinvigoration: f64,
    /// Independent trees searched in parallel and merged at the root.
    pub workers: usize,
    /// Restrict the search to these actions (all model actions when `None`).
    pub restrict_actions: Option<Vec<String>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            simulations: 2000,
            exploration: 30.0,
            gamma: 0.98,
            horizon: Horizon::MaxSubtasks(3),
            max_depth: 60,
            rollout: RolloutPolicy::Supportive,
            particles: 500,
            reinvigoration: 0.1,
            workers: 1,
            restrict_actions: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchConfigError {
    #[error("simulations must be at least 1")]
    Simulations,
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("particle count must be at least 1")]
    Particles,
    #[error("reinvigoration fraction must lie in [0, 1), got {0}")]
    Reinvigoration(f64),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("workers must be at least 1")]
    Workers,
    #[error("unknown action '{0}' in restrict_actions")]
    UnknownAction(String),
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchConfigError> {
        if self.simulations < 1 {
            return Err(SearchConfigError::Simulations);
        }
        match self.horizon {
            Horizon::MaxTransitions(0) | Horizon::MaxSubtasks(0) => return Err(SearchConfigError::Horizon),
            _ => {}
        }
        if self.max_depth < 1 {
            return Err(SearchConfigError::Horizon);
        }
        if self.particles < 1 {
            return Err(SearchConfigError::Particles);
        }
        if !(0.0..1.0).contains(&self.reinvigoration) {
            return Err(SearchConfigError::Reinvigoration(self.reinvigoration));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(SearchConfigError::Gamma(self.gamma));
        }
        if self.workers < 1 {
            return Err(SearchConfigError::Workers);
        }
        Ok(())
    }
}

/// Executed actions and their observations since the episode started.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    steps: Vec<(ActionToken, Observation)>,
}

impl History {
    pub fn push(&mut self, action: ActionToken, obs: Observation) {
        self.steps.push((action, obs));
    }

    pub fn steps(&self) -> &[(ActionToken, Observation)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}
