//! Supportive-behavior planning for human-robot collaboration.
//!
//! A hierarchical task model (HTM) describes what the human builder does and
//! which objects each subtask needs. [`model::compile`] turns it into a factored
//! generative POMDP whose hidden state tracks task progression, the robot's
//! workspace, and the builder's preferences. [`planner`] plans supportive
//! actions (wait, hold, bring, clean up) online with POMCP over particle
//! beliefs, [`baselines`] provides the hand-coded comparison policies, and
//! [`harness`] runs seeded simulated episodes and the offline experiments.
//! [`session`] drives a live session where a person answers each robot action.

pub mod baselines;
pub mod harness;
pub mod htm;
pub mod model;
pub mod planner;
pub mod rng;
pub mod session;

pub use htm::{ActionToken, Htm, HtmNode, LeafSpec, ObjectId, PrefId, TaskInstance};
pub use model::{compile, CompilerConfig, GenerativeModel, Observation, WorldState};
pub use planner::{plan_action, update_belief, Belief, SearchConfig};
