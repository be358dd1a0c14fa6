use rand::Rng;

use super::{Belief, Horizon, RolloutPolicy, SearchConfig};
use crate::htm::ActionToken;
use crate::model::{GenerativeModel, WorldState};
use crate::rng;

const NO_CHILD: u32 = u32::MAX;

/// Root statistics for one action.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionStats {
    pub action: ActionToken,
    pub visits: u32,
    /// Mean discounted return of simulations that started with this action.
    pub value: f64,
}

/// Outcome of one search: the chosen action plus per-action root statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub action: ActionToken,
    pub simulations: u32,
    pub root: Vec<ActionStats>,
}

impl SearchResult {
    /// Value estimate of the chosen action.
    pub fn value(&self) -> f64 {
        self.root
            .iter()
            .find(|s| s.action == self.action)
            .map(|s| s.value)
            .unwrap_or(0.0)
    }
}

/// Choose the next action for `belief` by POMCP search.
pub fn plan_action<R: Rng + ?Sized>(
    model: &GenerativeModel,
    belief: &Belief,
    config: &SearchConfig,
    rng: &mut R,
) -> ActionToken {
    search(model, belief, config, rng).action
}

/// Run `config.simulations` simulations from particles of `belief` and return
/// the root action with the highest mean value (ties go to the action listed
/// first in the model's action order).
///
/// # Panics
/// If the belief is empty or `config.restrict_actions` names an unknown action.
pub fn search<R: Rng + ?Sized>(
    model: &GenerativeModel,
    belief: &Belief,
    config: &SearchConfig,
    rng: &mut R,
) -> SearchResult {
    assert!(!belief.particles().is_empty(), "search needs a non-empty belief");
    let actions = candidate_actions(model, config);
    if actions.len() == 1 {
        return SearchResult {
            action: actions[0],
            simulations: 0,
            root: vec![ActionStats {
                action: actions[0],
                visits: 0,
                value: 0.0,
            }],
        };
    }

    let root = if config.workers <= 1 {
        Tree::new(model, config, &actions).run(belief.particles(), config.simulations, rng)
    } else {
        let seeds: Vec<u64> = (0..config.workers).map(|_| rng.gen()).collect();
        let per = config.simulations / config.workers as u32;
        let extra = config.simulations % config.workers as u32;
        let trees: Vec<Vec<ActionStats>> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .enumerate()
                .map(|(w, &seed)| {
                    let actions = &actions;
                    let sims = per + u32::from((w as u32) < extra);
                    scope.spawn(move || {
                        let mut wrng = rng::stream(seed, 0);
                        Tree::new(model, config, actions).run(belief.particles(), sims, &mut wrng)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
        });
        merge_roots(&trees)
    };

    let mut best: Option<&ActionStats> = None;
    for stats in root.iter().filter(|s| s.visits > 0) {
        if best.is_none_or(|b| stats.value > b.value) {
            best = Some(stats);
        }
    }
    SearchResult {
        action: best.map(|b| b.action).unwrap_or(actions[0]),
        simulations: config.simulations,
        root,
    }
}

fn candidate_actions(model: &GenerativeModel, config: &SearchConfig) -> Vec<ActionToken> {
    match &config.restrict_actions {
        None => model.actions().to_vec(),
        Some(labels) => {
            let u = model.universe();
            let mut out: Vec<ActionToken> = labels
                .iter()
                .map(|l| {
                    u.parse_action(l)
                        .unwrap_or_else(|| panic!("restrict_actions names unknown action '{l}'"))
                })
                .collect();
            // Keep the model's action order so ties break the same way.
            out.sort_by_key(|a| model.action_index(*a));
            out.dedup();
            assert!(!out.is_empty(), "restrict_actions must not be empty");
            out
        }
    }
}

/// Visit-weighted merge of root statistics from independent trees.
fn merge_roots(trees: &[Vec<ActionStats>]) -> Vec<ActionStats> {
    let mut merged: Vec<ActionStats> = trees[0]
        .iter()
        .map(|s| ActionStats {
            action: s.action,
            visits: 0,
            value: 0.0,
        })
        .collect();
    for tree in trees {
        for (m, s) in merged.iter_mut().zip(tree) {
            m.value += s.value * s.visits as f64;
            m.visits += s.visits;
        }
    }
    for m in &mut merged {
        if m.visits > 0 {
            m.value /= m.visits as f64;
        }
    }
    merged
}

#[derive(Clone, Copy)]
struct Edge {
    visits: u32,
    value: f64,
    child: [u32; 2],
}

struct Tree<'a> {
    model: &'a GenerativeModel,
    config: &'a SearchConfig,
    actions: &'a [ActionToken],
    /// Visit count per history node; node `i` owns `edges[i * |A| ..][..|A|]`.
    visits: Vec<u32>,
    edges: Vec<Edge>,
}

impl<'a> Tree<'a> {
    fn new(model: &'a GenerativeModel, config: &'a SearchConfig, actions: &'a [ActionToken]) -> Self {
        let mut t = Tree {
            model,
            config,
            actions,
            visits: Vec::new(),
            edges: Vec::new(),
        };
        t.add_node();
        t
    }

    fn add_node(&mut self) -> u32 {
        let id = self.visits.len() as u32;
        self.visits.push(0);
        self.edges.extend(std::iter::repeat_n(
            Edge {
                visits: 0,
                value: 0.0,
                child: [NO_CHILD; 2],
            },
            self.actions.len(),
        ));
        id
    }

    fn run<R: Rng + ?Sized>(mut self, particles: &[WorldState], sims: u32, rng: &mut R) -> Vec<ActionStats> {
        for _ in 0..sims {
            let s = particles[rng.gen_range(0..particles.len())];
            self.simulate(s, 0, 0, 0, rng);
        }
        self.actions
            .iter()
            .zip(&self.edges[..self.actions.len()])
            .map(|(&action, e)| ActionStats {
                action,
                visits: e.visits,
                value: e.value,
            })
            .collect()
    }

    fn finished(&self, s: &WorldState, depth: u32, advances: u32) -> bool {
        if depth >= self.config.max_depth || self.model.is_terminal(s) {
            return true;
        }
        match self.config.horizon {
            Horizon::MaxTransitions(d) => depth >= d,
            Horizon::MaxSubtasks(k) => advances >= k,
        }
    }

    fn select(&self, node: u32) -> usize {
        let n = self.actions.len();
        let edges = &self.edges[node as usize * n..][..n];
        if let Some(i) = edges.iter().position(|e| e.visits == 0) {
            return i;
        }
        let log_n = (self.visits[node as usize] as f64).ln();
        let c = self.config.exploration;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in edges.iter().enumerate() {
            let score = e.value + c * (log_n / e.visits as f64).sqrt();
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    fn simulate<R: Rng + ?Sized>(&mut self, s: WorldState, node: u32, depth: u32, advances: u32, rng: &mut R) -> f64 {
        if self.finished(&s, depth, advances) {
            return 0.0;
        }
        let ai = self.select(node);
        let step = self.model.sample_step(&s, self.actions[ai], rng);
        let advances = advances + u32::from(step.advanced);
        let e = node as usize * self.actions.len() + ai;
        let sym = step.obs.symbol();
        let child = self.edges[e].child[sym];
        let future = if child == NO_CHILD {
            let fresh = self.add_node();
            self.edges[e].child[sym] = fresh;
            self.rollout(step.next, depth + 1, advances, rng)
        } else {
            self.simulate(step.next, child, depth + 1, advances, rng)
        };
        let ret = step.reward + self.config.gamma * future;
        self.visits[node as usize] += 1;
        let edge = &mut self.edges[e];
        edge.visits += 1;
        edge.value += (ret - edge.value) / edge.visits as f64;
        ret
    }

    fn rollout<R: Rng + ?Sized>(&self, mut s: WorldState, mut depth: u32, mut advances: u32, rng: &mut R) -> f64 {
        let mut ret = 0.0;
        let mut discount = 1.0;
        while !self.finished(&s, depth, advances) {
            let a = self.rollout_action(&s, rng);
            let step = self.model.sample_step(&s, a, rng);
            ret += discount * step.reward;
            discount *= self.config.gamma;
            advances += u32::from(step.advanced);
            depth += 1;
            s = step.next;
        }
        ret
    }

    fn rollout_action<R: Rng + ?Sized>(&self, s: &WorldState, rng: &mut R) -> ActionToken {
        if self.config.rollout == RolloutPolicy::Supportive {
            if let Some(a) = self.supportive_action(s, rng) {
                return a;
            }
        }
        if self.config.rollout != RolloutPolicy::Uniform {
            let valid = self.actions.iter().filter(|&&a| !self.model.would_fail(s, a)).count();
            if valid > 0 {
                let k = rng.gen_range(0..valid);
                return *self
                    .actions
                    .iter()
                    .filter(|&&a| !self.model.would_fail(s, a))
                    .nth(k)
                    .expect("k < valid");
            }
        }
        self.actions[rng.gen_range(0..self.actions.len())]
    }

    fn supportive_action<R: Rng + ?Sized>(&self, s: &WorldState, rng: &mut R) -> Option<ActionToken> {
        let leaf = self.model.current_leaf(s)?;
        let missing = leaf.needed().difference(s.workspace);
        let spare = s.workspace.difference(self.model.needed_from(s));
        let pick = |pred: &dyn Fn(ActionToken) -> bool, rng: &mut R| {
            let n = self.actions.iter().filter(|&&a| pred(a)).count();
            (n > 0).then(|| {
                let k = rng.gen_range(0..n);
                self.actions.iter().copied().filter(|&a| pred(a)).nth(k).expect("k < n")
            })
        };
        pick(&|a| matches!(a, ActionToken::Bring(o) if missing.contains(o)), rng)
            .or_else(|| pick(&|a| matches!(a, ActionToken::Cleanup(o) if spare.contains(o)), rng))
            .or_else(|| {
                let adv = self.model.advance_actions();
                pick(&|a| adv.contains(&a), rng)
            })
    }
}
