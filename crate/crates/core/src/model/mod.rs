//! The factored generative POMDP compiled from a task model.
//!
//! Hidden state is the task instance being executed, the position within it,
//! the set of objects on the workspace, and the builder's preferences. The
//! model never materializes transition matrices; it samples
//! `(next state, observation, reward)` for a state-action pair.

mod config;
mod generative;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{CompilerConfig, ConfigError, NoiseConfig, RewardParams};
pub use generative::{compile, CompileError, GenerativeModel, Step};

use crate::htm::{ObjectSet, PrefId};

/// Preference values, one bit per declared preference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefSet(pub u64);

impl PrefSet {
    pub fn get(self, p: PrefId) -> bool {
        self.0 & (1u64 << p.0) != 0
    }

    pub fn set(&mut self, p: PrefId, value: bool) {
        if value {
            self.0 |= 1u64 << p.0;
        } else {
            self.0 &= !(1u64 << p.0);
        }
    }

    pub fn flip(&mut self, p: PrefId) {
        self.0 ^= 1u64 << p.0;
    }
}

/// Hidden world state.
///
/// `pos == instance length` is the final state: the task is complete.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState {
    pub instance: u32,
    pub pos: u32,
    pub workspace: ObjectSet,
    pub prefs: PrefSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailKind {
    /// The robot detected its own failure (e.g. nothing in the gripper).
    RobotError,
    /// The action did not fit the situation (signalled by the human, or the
    /// object was already there).
    WrongAction,
}

/// What the robot perceives after acting.
///
/// The planner only distinguishes `None` from `Fail`; the failure kind is kept
/// for logs and for scripted policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observation {
    None,
    Fail(FailKind),
}

impl Observation {
    pub const FAIL: Observation = Observation::Fail(FailKind::WrongAction);

    pub fn is_fail(self) -> bool {
        matches!(self, Observation::Fail(_))
    }

    /// Index of the collapsed planning symbol: 0 for none, 1 for fail.
    pub fn symbol(self) -> usize {
        self.is_fail() as usize
    }

    /// Same planning symbol.
    pub fn matches(self, other: Observation) -> bool {
        self.symbol() == other.symbol()
    }

    pub fn label(self) -> &'static str {
        match self {
            Observation::None => "none",
            Observation::Fail(_) => "fail",
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::None => f.write_str("none"),
            Observation::Fail(FailKind::RobotError) => f.write_str("fail(robot-error)"),
            Observation::Fail(FailKind::WrongAction) => f.write_str("fail(wrong-action)"),
        }
    }
}
