use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use super::{CompilerConfig, ConfigError, FailKind, NoiseConfig, Observation, PrefSet, RewardParams, WorldState};
use crate::htm::{
    linearize, validate_htm, ActionToken, Diagnostic, Gate, Htm, LeafSpec, LinearizeError, ObjectId,
    ObjectSet, PrefId, TaskInstance, Universe,
};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("invalid task model: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Result of one sampled transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub next: WorldState,
    pub obs: Observation,
    pub reward: f64,
    /// The step completed a subtask.
    pub advanced: bool,
}

/// Generative POMDP over [`WorldState`].
///
/// Cheap to clone; the task instances and universes are shared.
#[derive(Clone, Debug)]
pub struct GenerativeModel {
    name: Arc<str>,
    universe: Arc<Universe>,
    instances: Arc<Vec<TaskInstance>>,
    actions: Arc<Vec<ActionToken>>,
    pref_prior: Arc<Vec<f64>>,
    /// Per instance and position: objects needed from that subtask on.
    needed_from: Arc<Vec<Vec<ObjectSet>>>,
    /// Actions that complete at least one subtask, in action order.
    advance_actions: Arc<Vec<ActionToken>>,
    pub gamma: f64,
    pub noise: NoiseConfig,
    pub rewards: RewardParams,
}

/// Compile a validated task model into its generative POMDP.
pub fn compile(htm: &Htm, config: &CompilerConfig) -> Result<GenerativeModel, CompileError> {
    let diags = validate_htm(htm);
    if !diags.is_empty() {
        return Err(CompileError::Invalid(diags));
    }
    config.noise.validate()?;
    if !(0.0..=1.0).contains(&config.gamma) {
        return Err(ConfigError::Gamma(config.gamma).into());
    }
    let u = &htm.universe;
    let mut pref_prior = vec![0.5; u.preferences.len()];
    for (name, &p) in &config.preference_prior {
        let id = u
            .preference(name)
            .ok_or_else(|| ConfigError::UnknownPreference(name.clone()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::Prior {
                name: name.clone(),
                value: p,
            }
            .into());
        }
        pref_prior[id.0 as usize] = p;
    }
    let instances = linearize(&htm.root, config.interleaving_cap)?;

    let mut actions = vec![ActionToken::Wait, ActionToken::Hold];
    let objects = (0..u.objects.len() as u16).map(ObjectId);
    actions.extend(objects.clone().map(ActionToken::Bring));
    actions.extend(objects.map(ActionToken::Cleanup));
    actions.extend((0..u.custom_actions.len() as u16).map(|c| ActionToken::Custom(crate::htm::CustomId(c))));

    let needed_from = instances
        .iter()
        .map(|inst| {
            let mut acc = ObjectSet::EMPTY;
            let mut out: Vec<ObjectSet> = inst
                .leaves
                .iter()
                .rev()
                .map(|l| {
                    acc = acc.union(l.needed());
                    acc
                })
                .collect();
            out.reverse();
            out.push(ObjectSet::EMPTY);
            out
        })
        .collect();
    let advance_actions = actions
        .iter()
        .copied()
        .filter(|&a| {
            instances
                .iter()
                .any(|i| i.leaves.iter().any(|l| l.rule_for(a).is_some()))
        })
        .collect();

    Ok(GenerativeModel {
        name: htm.name.as_str().into(),
        needed_from: Arc::new(needed_from),
        advance_actions: Arc::new(advance_actions),
        universe: Arc::new(u.clone()),
        instances: Arc::new(instances),
        actions: Arc::new(actions),
        pref_prior: Arc::new(pref_prior),
        gamma: config.gamma,
        noise: config.noise,
        rewards: config.rewards.clone(),
    })
}

impl GenerativeModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn instances(&self) -> &[TaskInstance] {
        &self.instances
    }

    /// Action universe in its fixed order: wait, hold, bring each object,
    /// clean up each object, custom tokens.
    pub fn actions(&self) -> &[ActionToken] {
        &self.actions
    }

    pub fn action_index(&self, a: ActionToken) -> Option<usize> {
        self.actions.iter().position(|&x| x == a)
    }

    /// Objects needed by the subtask at `s` or any later one.
    pub fn needed_from(&self, s: &WorldState) -> ObjectSet {
        self.needed_from[s.instance as usize][s.pos as usize]
    }

    /// Actions that can complete some subtask of some instance.
    pub fn advance_actions(&self) -> &[ActionToken] {
        &self.advance_actions
    }

    pub fn pref_prior(&self) -> &[f64] {
        &self.pref_prior
    }

    /// Same model with different dynamics noise.
    pub fn with_noise(&self, noise: NoiseConfig) -> GenerativeModel {
        GenerativeModel {
            noise,
            ..self.clone()
        }
    }

    /// Same model with a different preference prior (one entry per preference).
    pub fn with_pref_prior(&self, prior: Vec<f64>) -> GenerativeModel {
        assert_eq!(prior.len(), self.universe.preferences.len(), "one prior per preference");
        GenerativeModel {
            pref_prior: Arc::new(prior),
            ..self.clone()
        }
    }

    /// The preference gating `hold`, if the model declares one: the first
    /// preference any hold rule depends on, else one literally named "hold".
    pub fn hold_preference(&self) -> Option<PrefId> {
        self.instances
            .iter()
            .flat_map(|i| i.leaves.iter())
            .flat_map(|l| l.advance_actions.iter())
            .find_map(|r| match (r.action, r.gate) {
                (ActionToken::Hold, Gate::RequiresPreference { pref, .. }) => Some(pref),
                _ => None,
            })
            .or_else(|| self.universe.preference("hold"))
    }

    pub fn max_instance_len(&self) -> usize {
        self.instances.iter().map(TaskInstance::len).max().unwrap_or(0)
    }

    /// Number of state features: one per object, one per preference, plus the
    /// task-progression and instance indices.
    pub fn state_feature_count(&self) -> usize {
        self.universe.objects.len() + self.universe.preferences.len() + 2
    }

    pub fn instance_len(&self, s: &WorldState) -> usize {
        self.instances[s.instance as usize].len()
    }

    pub fn is_terminal(&self, s: &WorldState) -> bool {
        s.pos as usize >= self.instance_len(s)
    }

    /// The subtask in progress, or `None` in the final state.
    pub fn current_leaf(&self, s: &WorldState) -> Option<&LeafSpec> {
        self.instances[s.instance as usize].leaves.get(s.pos as usize)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        self.sample_initial_with(rng, &self.pref_prior)
    }

    /// Initial state: first subtask, empty workspace, a uniformly drawn task
    /// instance, and each preference drawn independently from `prior`.
    pub fn sample_initial_with<R: Rng + ?Sized>(&self, rng: &mut R, prior: &[f64]) -> WorldState {
        let instance = rng.gen_range(0..self.instances.len()) as u32;
        let mut prefs = PrefSet::default();
        for (i, &p) in prior.iter().enumerate() {
            prefs.set(PrefId(i as u16), rng.gen_bool(p));
        }
        WorldState {
            instance,
            pos: 0,
            workspace: ObjectSet::EMPTY,
            prefs,
        }
    }

    pub fn action_cost(&self, a: ActionToken) -> f64 {
        match a {
            ActionToken::Hold => self.rewards.cost_hold,
            ActionToken::Wait => self.rewards.cost_wait,
            _ => self.rewards.cost_other,
        }
    }

    fn gate_holds(gate: Gate, prefs: PrefSet) -> bool {
        match gate {
            Gate::Always => true,
            Gate::RequiresPreference { pref, value } => prefs.get(pref) == value,
        }
    }

    /// True when the action fails from `s` under the noise-free dynamics
    /// whatever the random draws.
    pub fn would_fail(&self, s: &WorldState, a: ActionToken) -> bool {
        match a {
            ActionToken::Bring(o) => s.workspace.contains(o),
            ActionToken::Cleanup(o) => !s.workspace.contains(o),
            _ => match self.current_leaf(s).and_then(|l| l.rule_for(a)) {
                Some(rule) => !Self::gate_holds(rule.gate, s.prefs),
                None => true,
            },
        }
    }

    /// Sample `(s', o, r)` for action `a` in non-terminal state `s`.
    ///
    /// # Panics
    /// If `s` is terminal.
    pub fn sample_step<R: Rng + ?Sized>(&self, s: &WorldState, a: ActionToken, rng: &mut R) -> Step {
        assert!(!self.is_terminal(s), "sample_step called on a terminal state");
        let rw = &self.rewards;
        let mut next = *s;
        let mut reward = self.action_cost(a);
        let mut advanced = false;
        let obs = match a {
            ActionToken::Bring(o) | ActionToken::Cleanup(o) => {
                let bring = matches!(a, ActionToken::Bring(_));
                if s.workspace.contains(o) == bring {
                    Observation::Fail(FailKind::WrongAction)
                } else if self.noise.manipulation_success < 1.0
                    && !rng.gen_bool(self.noise.manipulation_success)
                {
                    Observation::Fail(FailKind::RobotError)
                } else {
                    next.workspace.toggle(o);
                    Observation::None
                }
            }
            _ => {
                let leaf = &self.instances[s.instance as usize].leaves[s.pos as usize];
                match leaf.rule_for(a) {
                    Some(rule) if Self::gate_holds(rule.gate, s.prefs) => {
                        advanced = true;
                        reward += rw.subtask_transition;
                        if a == ActionToken::Hold
                            && matches!(rule.gate, Gate::RequiresPreference { value: true, .. })
                        {
                            reward += rw.preference_honored;
                        }
                        let missing = leaf.needed().difference(s.workspace).len();
                        reward += rw.missing_object_on_transition * missing as f64;
                        next.workspace = s.workspace.difference(leaf.consumed_parts);
                        next.pos += 1;
                        if self.is_terminal(&next) {
                            reward += rw.final_reached
                                + rw.uncleaned_object_at_final * next.workspace.len() as f64;
                        }
                        Observation::None
                    }
                    _ => Observation::Fail(FailKind::WrongAction),
                }
            }
        };
        if !self.is_terminal(&next) {
            self.apply_noise(&mut next, rng);
        }
        Step {
            next,
            obs,
            reward,
            advanced,
        }
    }

    fn apply_noise<R: Rng + ?Sized>(&self, s: &mut WorldState, rng: &mut R) {
        if self.noise.object_toggle > 0.0 {
            for i in 0..self.universe.objects.len() {
                if rng.gen_bool(self.noise.object_toggle) {
                    s.workspace.toggle(ObjectId(i as u16));
                }
            }
        }
        if self.noise.pref_flip > 0.0 {
            for i in 0..self.universe.preferences.len() {
                if rng.gen_bool(self.noise.pref_flip) {
                    s.prefs.flip(PrefId(i as u16));
                }
            }
        }
    }

    /// Lower and upper bound on any single-step reward. Objects missing at a
    /// transition and objects left at the final state are disjoint, so the
    /// per-object penalties apply to at most all objects once.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let rw = &self.rewards;
        let n = self.universe.objects.len() as f64;
        let costs = [rw.cost_hold, rw.cost_wait, rw.cost_other];
        let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let max_cost = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let per_object = [rw.missing_object_on_transition, rw.uncleaned_object_at_final];
        let lo = min_cost
            + rw.subtask_transition.min(0.0)
            + rw.final_reached.min(0.0)
            + per_object.iter().copied().fold(0.0, f64::min) * n;
        let hi = max_cost.max(rw.cost_hold + rw.preference_honored)
            + rw.subtask_transition.max(0.0)
            + rw.final_reached.max(0.0)
            + per_object.iter().copied().fold(0.0, f64::max) * n;
        (lo, hi)
    }
}
