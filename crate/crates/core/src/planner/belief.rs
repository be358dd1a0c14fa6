use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

use super::SearchConfig;
use crate::htm::{ActionToken, ObjectId, PrefId};
use crate::model::{GenerativeModel, Observation, WorldState};

/// Rejection-sampling attempts per target particle before the filter counts
/// as depleted.
const ATTEMPTS_PER_PARTICLE: usize = 50;

/// Particle approximation of the distribution over hidden states.
#[derive(Clone, Debug)]
pub struct Belief {
    particles: Vec<WorldState>,
    marginals: OnceLock<BeliefMarginals>,
}

impl PartialEq for Belief {
    fn eq(&self, other: &Self) -> bool {
        self.particles == other.particles
    }
}

impl Belief {
    /// # Panics
    /// If `particles` is empty.
    pub fn from_particles(particles: Vec<WorldState>) -> Self {
        assert!(!particles.is_empty(), "a belief needs at least one particle");
        Belief {
            particles,
            marginals: OnceLock::new(),
        }
    }

    /// `n` particles drawn from the model's initial-state distribution.
    pub fn initial<R: Rng + ?Sized>(model: &GenerativeModel, n: usize, rng: &mut R) -> Self {
        Self::from_particles((0..n.max(1)).map(|_| model.sample_initial(rng)).collect())
    }

    pub fn particles(&self) -> &[WorldState] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn marginals(&self, model: &GenerativeModel) -> &BeliefMarginals {
        self.marginals.get_or_init(|| belief_marginals(model, self))
    }

    /// Most frequent particle; ties go to the smallest state.
    pub fn map_state(&self) -> WorldState {
        let mut counts: HashMap<WorldState, usize> = HashMap::new();
        for s in &self.particles {
            *counts.entry(*s).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by(|(sa, ca), (sb, cb)| ca.cmp(cb).then(sb.cmp(sa)))
            .map(|(s, _)| s)
            .expect("non-empty belief")
    }

    /// Fraction of particles in the final state.
    pub fn terminal_fraction(&self, model: &GenerativeModel) -> f64 {
        self.particles.iter().filter(|s| model.is_terminal(s)).count() as f64 / self.len() as f64
    }
}

/// Summary statistics of a belief.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefMarginals {
    /// Probability that each preference is true.
    pub prefs: Vec<f64>,
    /// Probability that each object is on the workspace.
    pub objects: Vec<f64>,
    /// Distribution over task instances.
    pub instances: Vec<f64>,
    /// Distribution over positions `0..=max instance length`; the last entries
    /// include the final state.
    pub positions: Vec<f64>,
    /// Joint `(instance, position)` distribution, most probable first.
    pub subtasks: Vec<((u32, u32), f64)>,
}

impl BeliefMarginals {
    pub fn pref(&self, p: PrefId) -> f64 {
        self.prefs[p.0 as usize]
    }

    pub fn object(&self, o: ObjectId) -> f64 {
        self.objects[o.0 as usize]
    }

    /// Most probable `(instance, position)`.
    pub fn map_subtask(&self) -> (u32, u32) {
        self.subtasks[0].0
    }
}

pub fn belief_marginals(model: &GenerativeModel, belief: &Belief) -> BeliefMarginals {
    let u = model.universe();
    let n = belief.len() as f64;
    let mut prefs = vec![0.0; u.preferences.len()];
    let mut objects = vec![0.0; u.objects.len()];
    let mut instances = vec![0.0; model.instances().len()];
    let mut positions = vec![0.0; model.max_instance_len() + 1];
    let mut joint: HashMap<(u32, u32), f64> = HashMap::new();
    for s in belief.particles() {
        for (i, p) in prefs.iter_mut().enumerate() {
            if s.prefs.get(PrefId(i as u16)) {
                *p += 1.0;
            }
        }
        for o in s.workspace.iter() {
            objects[o.0 as usize] += 1.0;
        }
        instances[s.instance as usize] += 1.0;
        positions[s.pos as usize] += 1.0;
        *joint.entry((s.instance, s.pos)).or_default() += 1.0;
    }
    for v in prefs.iter_mut().chain(&mut objects).chain(&mut instances).chain(&mut positions) {
        *v /= n;
    }
    let mut subtasks: Vec<((u32, u32), f64)> = joint.into_iter().map(|(k, c)| (k, c / n)).collect();
    subtasks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    BeliefMarginals {
        prefs,
        objects,
        instances,
        positions,
        subtasks,
    }
}

#[derive(Debug, Error)]
pub enum BeliefError {
    /// No particle explains the observation, even after reinvigoration. The
    /// fallback propagates the prior through the action, ignoring the
    /// observation.
    #[error("belief reset: no particle is consistent with the observation")]
    Reset { fallback: Belief },
}

impl BeliefError {
    pub fn into_fallback(self) -> Belief {
        match self {
            BeliefError::Reset { fallback } => fallback,
        }
    }
}

/// Condition the belief on having executed `action` and observed `obs`.
///
/// Rejection filter: draw a particle, simulate the action, keep the successor
/// when the simulated observation matches. If fewer than `config.particles`
/// successors are found within the attempt budget, the belief is
/// reinvigorated with perturbed particles (random object flips, and
/// preference flips only when the model lets preferences drift) that are
/// themselves consistent with the observation; at least a
/// `config.reinvigoration` share of the result is then fresh.
pub fn update_belief<R: Rng + ?Sized>(
    model: &GenerativeModel,
    belief: &Belief,
    action: ActionToken,
    obs: Observation,
    config: &SearchConfig,
    rng: &mut R,
) -> Result<Belief, BeliefError> {
    let n = config.particles.max(1);
    let budget = n * ATTEMPTS_PER_PARTICLE;
    let live: Vec<WorldState> = belief
        .particles()
        .iter()
        .copied()
        .filter(|s| !model.is_terminal(s))
        .collect();
    if live.is_empty() {
        return Err(BeliefError::Reset {
            fallback: belief.clone(),
        });
    }

    let mut accepted = Vec::with_capacity(n);
    for _ in 0..budget {
        if accepted.len() == n {
            break;
        }
        let s = live[rng.gen_range(0..live.len())];
        let step = model.sample_step(&s, action, rng);
        if step.obs.matches(obs) {
            accepted.push(step.next);
        }
    }
    if accepted.len() == n {
        return Ok(Belief::from_particles(accepted));
    }

    let want_fresh = if accepted.is_empty() {
        n
    } else {
        (n - accepted.len()).max((config.reinvigoration * n as f64).ceil() as usize).min(n)
    };
    let drift_prefs = model.noise.pref_flip > 0.0;
    let mut fresh = Vec::with_capacity(want_fresh);
    for _ in 0..budget {
        if fresh.len() == want_fresh {
            break;
        }
        let s = perturb(model, live[rng.gen_range(0..live.len())], drift_prefs, rng);
        if model.is_terminal(&s) {
            continue;
        }
        let step = model.sample_step(&s, action, rng);
        if step.obs.matches(obs) {
            fresh.push(step.next);
        }
    }

    if accepted.is_empty() && fresh.is_empty() {
        let fallback = (0..n)
            .map(|_| {
                let s = perturb(model, live[rng.gen_range(0..live.len())], true, rng);
                model.sample_step(&s, action, rng).next
            })
            .collect();
        return Err(BeliefError::Reset {
            fallback: Belief::from_particles(fallback),
        });
    }

    let keep = n - fresh.len();
    let pool = if accepted.is_empty() { &fresh } else { &accepted };
    let mut particles: Vec<WorldState> = (0..keep).map(|i| {
        if i < accepted.len() {
            accepted[i]
        } else {
            pool[rng.gen_range(0..pool.len())]
        }
    }).collect();
    particles.extend(fresh);
    Ok(Belief::from_particles(particles))
}

/// Flip one or more random object-presence features, or preferences too when
/// `prefs` is set.
fn perturb<R: Rng + ?Sized>(model: &GenerativeModel, mut s: WorldState, prefs: bool, rng: &mut R) -> WorldState {
    let n_obj = model.universe().objects.len();
    let n_feat = n_obj + if prefs { model.universe().preferences.len() } else { 0 };
    if n_feat == 0 {
        return s;
    }
    loop {
        let f = rng.gen_range(0..n_feat);
        if f < n_obj {
            s.workspace.toggle(ObjectId(f as u16));
        } else {
            s.prefs.flip(PrefId((f - n_obj) as u16));
        }
        if !rng.gen_bool(0.3) {
            return s;
        }
    }
}
