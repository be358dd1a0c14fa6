use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineError, FixedSupportPolicy, Policy, RandomPolicy, RepeatPolicy, SupportMode};
use crate::htm::ActionToken;
use crate::model::{GenerativeModel, NoiseConfig, Observation};
use crate::planner::{plan_action, update_belief, Belief, SearchConfig};
use crate::rng::{self, SimRng, ENV_STREAM, POLICY_STREAM};

/// Simulated environment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub noise: NoiseConfig,
    /// Step limit; `None` means [`EnvConfig::DEFAULT_STEPS_PER_LEAF`] times the
    /// longest instance.
    pub max_steps: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            noise: NoiseConfig::ENVIRONMENT,
            max_steps: None,
        }
    }
}

impl EnvConfig {
    pub const DEFAULT_STEPS_PER_LEAF: usize = 60;

    pub fn step_limit(&self, model: &GenerativeModel) -> usize {
        self.max_steps
            .unwrap_or(Self::DEFAULT_STEPS_PER_LEAF * model.max_instance_len())
    }
}

/// Which policy drives an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum PolicyKind {
    Pomcp(SearchConfig),
    Random,
    Repeat { cycles: usize },
    AlwaysHold,
    NeverHold,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown policy '{0}' (expected one of pomcp, random, repeat, always-hold, never-hold)")]
pub struct UnknownPolicy(pub String);

impl PolicyKind {
    pub const IDS: [&'static str; 5] = ["pomcp", "random", "repeat", "always-hold", "never-hold"];

    pub fn id(&self) -> &'static str {
        match self {
            PolicyKind::Pomcp(_) => "pomcp",
            PolicyKind::Random => "random",
            PolicyKind::Repeat { .. } => "repeat",
            PolicyKind::AlwaysHold => "always-hold",
            PolicyKind::NeverHold => "never-hold",
        }
    }

    /// Policy from its id; `search` is used for `pomcp`.
    pub fn from_id(id: &str, search: &SearchConfig) -> Result<Self, UnknownPolicy> {
        Ok(match id {
            "pomcp" => PolicyKind::Pomcp(search.clone()),
            "random" => PolicyKind::Random,
            "repeat" => PolicyKind::Repeat {
                cycles: RepeatPolicy::DEFAULT_CYCLES,
            },
            "always-hold" => PolicyKind::AlwaysHold,
            "never-hold" => PolicyKind::NeverHold,
            _ => return Err(UnknownPolicy(id.to_string())),
        })
    }

    /// Fresh policy instance for one episode. `env_noise` is the noise the
    /// planner's belief filter should expect.
    pub fn instantiate(
        &self,
        model: &GenerativeModel,
        env_noise: NoiseConfig,
        rng: &mut SimRng,
    ) -> Result<Box<dyn Policy>, BaselineError> {
        Ok(match self {
            PolicyKind::Pomcp(cfg) => Box::new(PomcpPolicy::new(model, env_noise, cfg.clone(), rng)),
            PolicyKind::Random => Box::new(RandomPolicy::new(model)?),
            PolicyKind::Repeat { cycles } => Box::new(RepeatPolicy::new(model, *cycles)?),
            PolicyKind::AlwaysHold => Box::new(FixedSupportPolicy::new(model, SupportMode::AlwaysHold)),
            PolicyKind::NeverHold => Box::new(FixedSupportPolicy::new(model, SupportMode::NeverHold)),
        })
    }
}

/// The online planner as a policy: searches with the noise-free model and
/// filters the belief with the noise the environment is expected to have.
#[derive(Clone, Debug)]
pub struct PomcpPolicy {
    plan_model: GenerativeModel,
    filter_model: GenerativeModel,
    config: SearchConfig,
    belief: Belief,
    last: Option<ActionToken>,
    /// Belief updates that found no consistent particle.
    pub resets: usize,
}

impl PomcpPolicy {
    pub fn new(model: &GenerativeModel, env_noise: NoiseConfig, config: SearchConfig, rng: &mut SimRng) -> Self {
        let plan_model = model.with_noise(NoiseConfig::NONE);
        let belief = Belief::initial(&plan_model, config.particles, rng);
        PomcpPolicy {
            filter_model: model.with_noise(env_noise),
            plan_model,
            config,
            belief,
            last: None,
            resets: 0,
        }
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }
}

impl Policy for PomcpPolicy {
    fn id(&self) -> &str {
        "pomcp"
    }

    fn next_action(&mut self, last_obs: Option<Observation>, rng: &mut SimRng) -> ActionToken {
        if let (Some(a), Some(o)) = (self.last, last_obs) {
            self.belief = update_belief(&self.filter_model, &self.belief, a, o, &self.config, rng)
                .unwrap_or_else(|e| {
                    self.resets += 1;
                    e.into_fallback()
                });
        }
        let a = plan_action(&self.plan_model, &self.belief, &self.config, rng);
        self.last = Some(a);
        a
    }

    fn pref_estimates(&self) -> Option<Vec<f64>> {
        Some(self.belief.marginals(&self.plan_model).prefs.clone())
    }
}

/// One executed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub action: String,
    pub observation: String,
    pub reward: f64,
    /// Policy's preference estimates when it chose the action.
    pub pref_estimates: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub policy: String,
    /// Hidden task instance drawn for the episode.
    pub instance: u32,
    /// Hidden preference values, in declaration order.
    pub prefs: Vec<bool>,
    pub trace: Vec<TraceRow>,
    /// Undiscounted sum of rewards.
    pub total_return: f64,
    pub steps: usize,
    /// Reached the final state (false: stopped by the step limit).
    pub terminated: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EpisodeError {
    #[error("policy '{policy}' chose an action outside the model: {action:?}")]
    ForeignAction { policy: String, action: ActionToken },
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Run one episode of `policy` against the model's dynamics with the
/// environment's noise. The environment and the policy draw from separate
/// streams of `seed`.
pub fn run_episode(
    model: &GenerativeModel,
    policy: &mut dyn Policy,
    env: &EnvConfig,
    seed: u64,
) -> Result<EpisodeRecord, EpisodeError> {
    let mut env_rng = rng::stream(seed, ENV_STREAM);
    let mut policy_rng = rng::stream(seed, POLICY_STREAM);
    run_with(model, policy, env, seed, &mut env_rng, &mut policy_rng)
}

/// Instantiate `kind` from the policy stream of `seed` and run one episode.
pub fn run_policy_episode(
    model: &GenerativeModel,
    kind: &PolicyKind,
    env: &EnvConfig,
    seed: u64,
) -> Result<EpisodeRecord, EpisodeError> {
    let mut env_rng = rng::stream(seed, ENV_STREAM);
    let mut policy_rng = rng::stream(seed, POLICY_STREAM);
    let mut policy = kind.instantiate(model, env.noise, &mut policy_rng)?;
    run_with(model, policy.as_mut(), env, seed, &mut env_rng, &mut policy_rng)
}

fn run_with(
    model: &GenerativeModel,
    policy: &mut dyn Policy,
    env: &EnvConfig,
    seed: u64,
    env_rng: &mut SimRng,
    policy_rng: &mut SimRng,
) -> Result<EpisodeRecord, EpisodeError> {
    let env_model = model.with_noise(env.noise);
    let limit = env.step_limit(model);
    let mut s = env_model.sample_initial(env_rng);
    let prefs = (0..model.universe().preferences.len())
        .map(|i| s.prefs.get(crate::htm::PrefId(i as u16)))
        .collect();
    let instance = s.instance;
    let mut trace = Vec::new();
    let mut total = 0.0;
    let mut last_obs = None;
    while !env_model.is_terminal(&s) && trace.len() < limit {
        let a = policy.next_action(last_obs, policy_rng);
        if model.action_index(a).is_none() {
            return Err(EpisodeError::ForeignAction {
                policy: policy.id().to_string(),
                action: a,
            });
        }
        let pref_estimates = policy.pref_estimates();
        let step = env_model.sample_step(&s, a, env_rng);
        total += step.reward;
        trace.push(TraceRow {
            action: model.universe().action_label(a),
            observation: step.obs.to_string(),
            reward: step.reward,
            pref_estimates,
        });
        last_obs = Some(step.obs);
        s = step.next;
    }
    Ok(EpisodeRecord {
        seed,
        policy: policy.id().to_string(),
        instance,
        prefs,
        steps: trace.len(),
        trace,
        total_return: total,
        terminated: env_model.is_terminal(&s),
    })
}
