//! Exact reference computations shared by the integration tests. The dynamics
//! here are written out from the reward and transition rules directly and do
//! not call the sampler.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use supportive_core::htm::{parse_htm, ActionToken, Gate, ObjectId, ObjectSet, PrefId};
use supportive_core::model::{NoiseConfig, PrefSet};
use supportive_core::planner::{search, Horizon};
use supportive_core::{compile, rng, Belief, CompilerConfig, GenerativeModel, SearchConfig, WorldState};

/// Weighted set of states; weights need not sum to one.
pub type Dist = BTreeMap<WorldState, f64>;

#[derive(Clone, Copy, Debug)]
pub struct Outcome {
    pub next: WorldState,
    pub fail: bool,
    pub prob: f64,
    pub reward: f64,
}

pub const TINY: &str = r#"{
    "name": "tiny",
    "objects": [{"id": "t", "class": "tool"}],
    "preferences": ["hold"],
    "root": {"leaf": {"name": "X", "required_tools": ["t"],
        "steps": [
            [{"action": "wait"}, {"action": "hold", "when": {"pref": "hold", "value": true}}],
            [{"action": "wait"}, {"action": "hold", "when": {"pref": "hold", "value": true}}]
        ]}}
}"#;

/// Horizon of the planner-vs-exact comparison: one transition per subtask.
pub const ORACLE_DEPTH: u32 = 2;
pub const ORACLE_PARTICLES: usize = 1000;

pub fn tiny() -> GenerativeModel {
    compile(&parse_htm(TINY).unwrap(), &CompilerConfig::default()).unwrap()
}

/// Random belief over the eight live states of the tiny model, rounded to
/// `ORACLE_PARTICLES` particles. The exact weights are the particle counts.
pub fn random_belief(seed: u64) -> (Belief, Dist) {
    let mut r = rng::stream(seed, 9);
    let mut states = Vec::new();
    for pos in 0..2 {
        for tool in [false, true] {
            for hold in [false, true] {
                let mut prefs = PrefSet::default();
                prefs.set(PrefId(0), hold);
                states.push(WorldState {
                    instance: 0,
                    pos,
                    workspace: ObjectSet(tool as u64),
                    prefs,
                });
            }
        }
    }
    let w: Vec<f64> = states
        .iter()
        .map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen::<f64>() })
        .collect();
    let total: f64 = w.iter().sum::<f64>().max(1e-12);
    let n = ORACLE_PARTICLES as f64;
    let mut counts: Vec<usize> = w.iter().map(|x| (x / total * n) as usize).collect();
    // largest remainder
    let mut rest: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(i, x)| (x / total * n - counts[i] as f64, i))
        .collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0));
    let missing = ORACLE_PARTICLES - counts.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        counts[i] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        counts[0] = ORACLE_PARTICLES;
    }
    let mut particles = Vec::new();
    let mut dist = Dist::new();
    for (s, &c) in states.iter().zip(&counts) {
        particles.extend(std::iter::repeat_n(*s, c));
        if c > 0 {
            dist.insert(*s, c as f64);
        }
    }
    (Belief::from_particles(particles), dist)
}

/// Exploration at the scale of the reward span, so every action keeps being
/// revisited as the budget grows.
pub fn oracle_config(depth: u32) -> SearchConfig {
    SearchConfig {
        simulations: 50_000,
        exploration: 110.0,
        horizon: Horizon::MaxTransitions(depth),
        ..SearchConfig::default()
    }
}

#[derive(Clone, Debug)]
pub struct OracleCase {
    pub seed: u64,
    pub exact_q: Vec<f64>,
    pub chosen: usize,
    pub tree_value: f64,
}

impl OracleCase {
    pub fn best(&self) -> f64 {
        self.exact_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn matches(&self) -> bool {
        self.best() - self.exact_q[self.chosen] < 1e-9
    }

    /// Difference between the best and second-best exact values.
    pub fn gap(&self) -> f64 {
        let mut q = self.exact_q.clone();
        q.sort_by(|a, b| b.total_cmp(a));
        q[0] - q[1]
    }

    pub fn value_error(&self) -> f64 {
        ((self.tree_value - self.best()) / self.best()).abs()
    }
}

pub fn oracle_case(m: &GenerativeModel, seed: u64, depth: u32) -> OracleCase {
    let config = oracle_config(depth);
    let (belief, dist) = random_belief(seed);
    let exact_q = expectimax_q(m, &dist, depth, config.gamma, m.noise);
    let res = search(m, &belief, &config, &mut rng::stream(seed, 1));
    OracleCase {
        seed,
        exact_q,
        chosen: m.action_index(res.action).unwrap(),
        tree_value: res.value(),
    }
}

pub fn terminal(m: &GenerativeModel, s: &WorldState) -> bool {
    s.pos as usize >= m.instances()[s.instance as usize].leaves.len()
}

fn cost(a: ActionToken) -> f64 {
    match a {
        ActionToken::Hold => -2.0,
        ActionToken::Wait => 0.0,
        _ => -1.0,
    }
}

/// Every (successor, fail?, probability, reward) for `a` in `s` under `noise`.
pub fn outcomes(m: &GenerativeModel, s: &WorldState, a: ActionToken, noise: NoiseConfig) -> Vec<Outcome> {
    let hold = m.universe().preference("hold");
    let mut base: Vec<(WorldState, bool, f64, f64)> = Vec::new();
    match a {
        ActionToken::Bring(o) | ActionToken::Cleanup(o) => {
            let present = s.workspace.contains(o);
            let want_present = matches!(a, ActionToken::Bring(_));
            if present == want_present {
                base.push((*s, true, 1.0, cost(a)));
            } else {
                let mut t = *s;
                t.workspace.toggle(o);
                base.push((t, false, noise.manipulation_success, cost(a)));
                if noise.manipulation_success < 1.0 {
                    base.push((*s, true, 1.0 - noise.manipulation_success, cost(a)));
                }
            }
        }
        _ => {
            let leaf = &m.instances()[s.instance as usize].leaves[s.pos as usize];
            let rule = leaf.advance_actions.iter().find(|r| {
                r.action == a
                    && match r.gate {
                        Gate::Always => true,
                        Gate::RequiresPreference { pref, value } => s.prefs.get(pref) == value,
                    }
            });
            match rule {
                None => base.push((*s, true, 1.0, cost(a))),
                Some(_) => {
                    let mut r = cost(a) + 10.0;
                    if a == ActionToken::Hold && hold.is_some_and(|h| s.prefs.get(h)) {
                        r += 10.0;
                    }
                    let needed = leaf.required_tools.union(leaf.consumed_parts);
                    r -= 15.0 * needed.difference(s.workspace).len() as f64;
                    let mut t = *s;
                    t.workspace = s.workspace.difference(leaf.consumed_parts);
                    t.pos += 1;
                    if terminal(m, &t) {
                        r += 100.0 - 15.0 * t.workspace.len() as f64;
                    }
                    base.push((t, false, 1.0, r));
                }
            }
        }
    }

    let n_obj = m.universe().objects.len();
    let n_pref = m.universe().preferences.len();
    let mut out = Vec::new();
    for (t, fail, p, r) in base {
        if terminal(m, &t) {
            out.push(Outcome { next: t, fail, prob: p, reward: r });
            continue;
        }
        for mask in 0u32..(1 << (n_obj + n_pref)) {
            let mut q = p;
            let mut u = t;
            for i in 0..n_obj + n_pref {
                let flip = mask & (1 << i) != 0;
                let eps = if i < n_obj { noise.object_toggle } else { noise.pref_flip };
                q *= if flip { eps } else { 1.0 - eps };
                if flip {
                    if i < n_obj {
                        u.workspace.toggle(ObjectId(i as u16));
                    } else {
                        u.prefs.flip(PrefId((i - n_obj) as u16));
                    }
                }
            }
            if q > 0.0 {
                out.push(Outcome { next: u, fail, prob: q, reward: r });
            }
        }
    }
    out
}

pub fn normalize(d: &Dist) -> Dist {
    let z: f64 = d.values().sum();
    d.iter().map(|(s, w)| (*s, w / z)).collect()
}

/// Exact Bayes filter step over non-terminal states.
pub fn exact_update(m: &GenerativeModel, d: &Dist, a: ActionToken, fail: bool, noise: NoiseConfig) -> Dist {
    let mut out = Dist::new();
    for (s, w) in d {
        if terminal(m, s) {
            continue;
        }
        for o in outcomes(m, s, a, noise) {
            if o.fail == fail {
                *out.entry(o.next).or_default() += w * o.prob;
            }
        }
    }
    normalize(&out)
}

pub fn pref_marginal(d: &Dist, p: PrefId) -> f64 {
    d.iter().filter(|(s, _)| s.prefs.get(p)).map(|(_, w)| w).sum::<f64>() / d.values().sum::<f64>()
}

/// Exact finite-horizon expectimax over the belief MDP with none/fail
/// observations. Terminal states are worth zero. Returns the root Q value of
/// every action in the model's action order, normalized by the weight of the
/// live states.
pub fn expectimax_q(m: &GenerativeModel, d: &Dist, depth: u32, gamma: f64, noise: NoiseConfig) -> Vec<f64> {
    let live: f64 = d.iter().filter(|(s, _)| !terminal(m, s)).map(|(_, w)| w).sum();
    m.actions()
        .iter()
        .map(|&a| q_unnorm(m, d, a, depth, gamma, noise) / live)
        .collect()
}

fn v_unnorm(m: &GenerativeModel, d: &Dist, depth: u32, gamma: f64, noise: NoiseConfig) -> f64 {
    if depth == 0 || d.is_empty() {
        return 0.0;
    }
    m.actions()
        .iter()
        .map(|&a| q_unnorm(m, d, a, depth, gamma, noise))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn q_unnorm(m: &GenerativeModel, d: &Dist, a: ActionToken, depth: u32, gamma: f64, noise: NoiseConfig) -> f64 {
    let mut reward = 0.0;
    let mut split = [Dist::new(), Dist::new()];
    for (s, w) in d {
        if terminal(m, s) {
            continue;
        }
        for o in outcomes(m, s, a, noise) {
            reward += w * o.prob * o.reward;
            if !terminal(m, &o.next) {
                *split[o.fail as usize].entry(o.next).or_default() += w * o.prob;
            }
        }
    }
    reward + gamma * split.iter().map(|b| v_unnorm(m, b, depth - 1, gamma, noise)).sum::<f64>()
}
