//! Hand-coded comparison policies.
//!
//! Scripted policies are blind: they never see the hidden state and only
//! track what their own actions should have done. A failed bring or clean-up
//! reported as a robot error is retried; a wrong-action failure on a bring or
//! clean-up means the workspace already is as intended, so the script moves on.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::htm::{ActionToken, LeafSpec, ObjectId, ObjectSet};
use crate::model::{FailKind, GenerativeModel, Observation};
use crate::rng::SimRng;

/// A policy produces the next action from its internal state and the
/// observation that followed its previous action (`None` before the first).
pub trait Policy: Send {
    fn id(&self) -> &str;

    fn next_action(&mut self, last_obs: Option<Observation>, rng: &mut SimRng) -> ActionToken;

    /// Current estimate of each preference being true, for policies that track one.
    fn pref_estimates(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("policy '{policy}' needs custom action '{action}', which the model does not declare")]
    MissingAction { policy: &'static str, action: &'static str },
}

fn custom(model: &GenerativeModel, policy: &'static str, action: &'static str) -> Result<ActionToken, BaselineError> {
    model
        .universe()
        .custom(action)
        .map(ActionToken::Custom)
        .ok_or(BaselineError::MissingAction { policy, action })
}

fn is_robot_error(obs: Observation) -> bool {
    obs == Observation::Fail(FailKind::RobotError)
}

/// Phase counters shared by the abstract-task scripts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyState {
    pub tools_brought: usize,
    pub subtasks_done: usize,
    /// 0 before the shared action `a`, 1 after it.
    pub within_subtask: usize,
    pub tools_cleaned: usize,
    pub last_action: Option<ActionToken>,
    pub pending_retry: bool,
}

impl PolicyState {
    fn new() -> Self {
        PolicyState {
            tools_brought: 0,
            subtasks_done: 0,
            within_subtask: 0,
            tools_cleaned: 0,
            last_action: None,
            pending_retry: false,
        }
    }
}

/// Brings every declared tool, then per subtask takes `a` and tries `b` or
/// `c` at random until one succeeds. Cleans the tools after the expected
/// number of subtasks.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    tools: Vec<ObjectId>,
    a: ActionToken,
    b: ActionToken,
    c: ActionToken,
    subtasks: usize,
    pub state: PolicyState,
}

impl RandomPolicy {
    /// `subtasks` defaults to half the longest instance (two steps per subtask).
    pub fn new(model: &GenerativeModel) -> Result<Self, BaselineError> {
        Ok(RandomPolicy {
            tools: model.universe().tools().collect(),
            a: custom(model, "random", "a")?,
            b: custom(model, "random", "b")?,
            c: custom(model, "random", "c")?,
            subtasks: model.max_instance_len() / 2,
            state: PolicyState::new(),
        })
    }

    /// Advance the script after `last` and return the next action.
    pub fn next(&mut self, last_obs: Option<Observation>, rng: &mut impl Rng) -> ActionToken {
        let st = &mut self.state;
        let action = match (st.last_action, last_obs) {
            (Some(last), Some(obs)) if obs.is_fail() => {
                let choosing = st.within_subtask == 1 && (last == self.b || last == self.c);
                let satisfied = matches!(last, ActionToken::Bring(_) | ActionToken::Cleanup(_)) && !is_robot_error(obs);
                if choosing {
                    st.pending_retry = false;
                    if rng.gen_bool(0.5) { self.b } else { self.c }
                } else if satisfied {
                    st.pending_retry = false;
                    Self::progress(st, last);
                    self.scripted()
                } else {
                    st.pending_retry = true;
                    last
                }
            }
            (Some(last), _) => {
                st.pending_retry = false;
                Self::progress(st, last);
                self.scripted_or_choice(rng)
            }
            (None, _) => self.scripted_or_choice(rng),
        };
        self.state.last_action = Some(action);
        action
    }

    fn progress(st: &mut PolicyState, last: ActionToken) {
        match last {
            ActionToken::Bring(_) => st.tools_brought += 1,
            ActionToken::Cleanup(_) => st.tools_cleaned += 1,
            _ if st.within_subtask == 0 => st.within_subtask = 1,
            _ => {
                st.within_subtask = 0;
                st.subtasks_done += 1;
            }
        }
    }

    fn scripted_or_choice(&self, rng: &mut impl Rng) -> ActionToken {
        let st = &self.state;
        if st.tools_brought >= self.tools.len() && st.subtasks_done < self.subtasks && st.within_subtask == 1 {
            if rng.gen_bool(0.5) { self.b } else { self.c }
        } else {
            self.scripted()
        }
    }

    fn scripted(&self) -> ActionToken {
        let st = &self.state;
        if st.tools_brought < self.tools.len() {
            ActionToken::Bring(self.tools[st.tools_brought])
        } else if st.subtasks_done < self.subtasks {
            // within_subtask == 1 is handled by the random choice
            self.a
        } else if st.tools_cleaned < self.tools.len() {
            ActionToken::Cleanup(self.tools[st.tools_cleaned])
        } else {
            ActionToken::Wait
        }
    }
}

impl Policy for RandomPolicy {
    fn id(&self) -> &str {
        "random"
    }

    fn next_action(&mut self, last_obs: Option<Observation>, rng: &mut SimRng) -> ActionToken {
        self.next(last_obs, rng)
    }
}

/// Brings every tool, repeats `a`, `b` a fixed number of times, then cleans
/// the tools. Failed actions are retried until they succeed.
#[derive(Clone, Debug)]
pub struct RepeatPolicy {
    script: Vec<ActionToken>,
    cursor: usize,
    pub state: PolicyState,
}

impl RepeatPolicy {
    pub const DEFAULT_CYCLES: usize = 20;

    pub fn new(model: &GenerativeModel, cycles: usize) -> Result<Self, BaselineError> {
        let tools: Vec<ObjectId> = model.universe().tools().collect();
        let a = custom(model, "repeat", "a")?;
        let b = custom(model, "repeat", "b")?;
        let mut script: Vec<ActionToken> = tools.iter().map(|&t| ActionToken::Bring(t)).collect();
        for _ in 0..cycles {
            script.extend([a, b]);
        }
        script.extend(tools.iter().map(|&t| ActionToken::Cleanup(t)));
        Ok(RepeatPolicy {
            script,
            cursor: 0,
            state: PolicyState::new(),
        })
    }

    /// The nominal action sequence, without retries.
    pub fn script(&self) -> &[ActionToken] {
        &self.script
    }

    pub fn next(&mut self, last_obs: Option<Observation>) -> ActionToken {
        if let (Some(last), Some(obs)) = (self.state.last_action, last_obs) {
            let satisfied = !obs.is_fail()
                || (matches!(last, ActionToken::Bring(_) | ActionToken::Cleanup(_)) && !is_robot_error(obs));
            self.state.pending_retry = !satisfied;
            if satisfied {
                self.cursor += 1;
                RandomPolicy::progress(&mut self.state, last);
            }
        }
        let action = self.script.get(self.cursor).copied().unwrap_or(ActionToken::Wait);
        self.state.last_action = Some(action);
        action
    }
}

impl Policy for RepeatPolicy {
    fn id(&self) -> &str {
        "repeat"
    }

    fn next_action(&mut self, last_obs: Option<Observation>, _rng: &mut SimRng) -> ActionToken {
        self.next(last_obs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportMode {
    AlwaysHold,
    NeverHold,
}

/// Fixed support script, subtask by subtask: clean up objects no later
/// subtask needs, bring the subtask's missing objects, then hold
/// ([`SupportMode::AlwaysHold`], falling back to wait after a failed hold) or
/// wait ([`SupportMode::NeverHold`]).
///
/// Follows the first task instance of the model.
#[derive(Clone, Debug)]
pub struct FixedSupportPolicy {
    mode: SupportMode,
    leaves: Vec<LeafSpec>,
    leaf: usize,
    believed: ObjectSet,
    queue: VecDeque<ActionToken>,
    hold_failed: bool,
    last: Option<ActionToken>,
}

impl FixedSupportPolicy {
    pub fn new(model: &GenerativeModel, mode: SupportMode) -> Self {
        let mut p = FixedSupportPolicy {
            mode,
            leaves: model.instances()[0].leaves.clone(),
            leaf: 0,
            believed: ObjectSet::EMPTY,
            queue: VecDeque::new(),
            hold_failed: false,
            last: None,
        };
        p.prepare();
        p
    }

    fn prepare(&mut self) {
        self.queue.clear();
        self.hold_failed = false;
        let Some(leaf) = self.leaves.get(self.leaf) else {
            return;
        };
        let still_needed: ObjectSet = self.leaves[self.leaf..]
            .iter()
            .fold(ObjectSet::EMPTY, |acc, l| acc.union(l.needed()));
        for o in self.believed.difference(still_needed).iter() {
            self.queue.push_back(ActionToken::Cleanup(o));
        }
        for o in leaf.needed().difference(self.believed).iter() {
            self.queue.push_back(ActionToken::Bring(o));
        }
    }

    fn advance_action(&self) -> ActionToken {
        let Some(leaf) = self.leaves.get(self.leaf) else {
            return ActionToken::Wait;
        };
        let has = |a| leaf.rule_for(a).is_some();
        if self.mode == SupportMode::AlwaysHold && has(ActionToken::Hold) && !self.hold_failed {
            return ActionToken::Hold;
        }
        if has(ActionToken::Wait) {
            return ActionToken::Wait;
        }
        leaf.advance_actions
            .iter()
            .map(|r| r.action)
            .find(|&a| a != ActionToken::Hold)
            .unwrap_or(ActionToken::Wait)
    }

    pub fn next(&mut self, last_obs: Option<Observation>) -> ActionToken {
        if let (Some(last), Some(obs)) = (self.last, last_obs) {
            match last {
                ActionToken::Bring(o) | ActionToken::Cleanup(o) => {
                    if !is_robot_error(obs) {
                        if matches!(last, ActionToken::Bring(_)) {
                            self.believed.insert(o);
                        } else {
                            self.believed.remove(o);
                        }
                        self.queue.pop_front();
                    }
                }
                ActionToken::Hold if obs.is_fail() => self.hold_failed = true,
                _ if obs.is_fail() => {}
                _ => {
                    if let Some(leaf) = self.leaves.get(self.leaf) {
                        self.believed = self.believed.difference(leaf.consumed_parts);
                    }
                    self.leaf += 1;
                    self.prepare();
                }
            }
        }
        let action = self.queue.front().copied().unwrap_or_else(|| self.advance_action());
        self.last = Some(action);
        action
    }
}

impl Policy for FixedSupportPolicy {
    fn id(&self) -> &str {
        match self.mode {
            SupportMode::AlwaysHold => "always-hold",
            SupportMode::NeverHold => "never-hold",
        }
    }

    fn next_action(&mut self, last_obs: Option<Observation>, _rng: &mut SimRng) -> ActionToken {
        self.next(last_obs)
    }
}
