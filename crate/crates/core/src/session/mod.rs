//! Live planning sessions: the human builder answers each robot action with a
//! signal, and the planner tracks the task only through its belief.

mod protocol;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htm::{ActionToken, PrefId};
use crate::model::{FailKind, GenerativeModel, NoiseConfig, Observation};
use crate::planner::{plan_action, update_belief, Belief, History, SearchConfig};
use crate::rng::{self, SimRng, POLICY_STREAM};

pub use protocol::{
    handle_message, ClientMessage, ErrorCode, LoadedSession, Prompt, ServerMessage, SessionConfig, SessionSetupError,
    PROTOCOL_VERSION,
};

/// Human answer to a prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanSignal {
    /// The action went fine.
    Ok,
    /// Error button.
    Error,
    /// The pending wait is over: the builder finished the subtask.
    Done,
}

impl HumanSignal {
    pub fn as_str(self) -> &'static str {
        match self {
            HumanSignal::Ok => "ok",
            HumanSignal::Error => "error",
            HumanSignal::Done => "done",
        }
    }

    pub fn observation(self) -> Observation {
        match self {
            HumanSignal::Ok | HumanSignal::Done => Observation::None,
            HumanSignal::Error => Observation::Fail(FailKind::WrongAction),
        }
    }
}

/// Signals accepted while `action` is pending.
pub fn legal_signals(action: ActionToken) -> Vec<HumanSignal> {
    if action == ActionToken::Wait {
        vec![HumanSignal::Done, HumanSignal::Error]
    } else {
        vec![HumanSignal::Ok, HumanSignal::Error]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Planning,
    AwaitingHuman(ActionToken),
    Terminal,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Planning => "planning",
            Phase::AwaitingHuman(_) => "awaiting-human",
            Phase::Terminal => "terminal",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("cannot {op} while the session is {phase}")]
    WrongPhase { op: &'static str, phase: &'static str },
    #[error("signal '{signal}' is not accepted for '{action}'; expected one of: {legal}")]
    IllegalSignal { signal: &'static str, action: String, legal: String },
    #[error("unknown action '{0}'")]
    UnknownAction(String),
}

/// One executed action, as shown to the builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub action: String,
    pub observation: String,
    /// Hold-preference estimate after the observation.
    pub p_hold: Option<f64>,
    /// Reward of the action from the most probable state; for display only.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskProb {
    pub instance: u32,
    pub position: u32,
    /// Leaf name, or "final".
    pub leaf: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalsView {
    pub p_hold: Option<f64>,
    pub prefs: BTreeMap<String, f64>,
    pub objects: BTreeMap<String, f64>,
    /// Most probable first.
    pub subtasks: Vec<SubtaskProb>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub phase: String,
    pub pending_action: Option<String>,
    pub marginals: MarginalsView,
    pub log: Vec<LogRow>,
    /// Leaf of the most probable subtask, `None` when the task looks finished.
    pub htm_highlight: Option<String>,
    pub total_reward: f64,
    pub belief_resets: usize,
}

/// One live session.
///
/// Searches with the noise-free model; filters the belief with the model's
/// own noise.
#[derive(Clone, Debug)]
pub struct SessionState {
    id: String,
    plan_model: GenerativeModel,
    filter_model: GenerativeModel,
    config: SearchConfig,
    belief: Belief,
    history: History,
    phase: Phase,
    log: Vec<LogRow>,
    rng: SimRng,
    total_reward: f64,
    resets: usize,
}

/// Fraction of terminal particles at which the session ends.
pub const TERMINAL_MASS: f64 = 0.5;

pub fn create_session(id: impl Into<String>, model: &GenerativeModel, config: SearchConfig, seed: u64) -> SessionState {
    let mut rng = rng::stream(seed, POLICY_STREAM);
    let plan_model = model.with_noise(NoiseConfig::NONE);
    let belief = Belief::initial(&plan_model, config.particles, &mut rng);
    SessionState {
        id: id.into(),
        filter_model: model.clone(),
        plan_model,
        config,
        belief,
        history: History::default(),
        phase: Phase::Planning,
        log: Vec::new(),
        rng,
        total_reward: 0.0,
        resets: 0,
    }
}

impl SessionState {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.plan_model
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn p_hold(&self) -> Option<f64> {
        let hold = self.plan_model.hold_preference()?;
        Some(self.belief.marginals(&self.plan_model).pref(hold))
    }

    fn prompt(&self, action: ActionToken) -> Prompt {
        Prompt {
            action: self.plan_model.universe().action_label(action),
            legal_signals: legal_signals(action),
            step: self.history.len(),
        }
    }

    /// Plan the next action and wait for the human's answer.
    pub fn advance(&mut self) -> Result<Prompt, SessionError> {
        self.expect_planning("advance")?;
        let a = plan_action(&self.plan_model, &self.belief, &self.config, &mut self.rng);
        self.phase = Phase::AwaitingHuman(a);
        Ok(self.prompt(a))
    }

    /// Operator override: execute `label` instead of the planner's choice.
    /// Replaces a pending prompt that has not been answered yet.
    pub fn propose(&mut self, label: &str) -> Result<Prompt, SessionError> {
        if self.phase == Phase::Terminal {
            return Err(SessionError::WrongPhase {
                op: "propose an action",
                phase: Phase::Terminal.as_str(),
            });
        }
        let a = self
            .plan_model
            .universe()
            .parse_action(label)
            .ok_or_else(|| SessionError::UnknownAction(label.to_string()))?;
        self.phase = Phase::AwaitingHuman(a);
        Ok(self.prompt(a))
    }

    fn expect_planning(&self, op: &'static str) -> Result<(), SessionError> {
        match self.phase {
            Phase::Planning => Ok(()),
            p => Err(SessionError::WrongPhase { op, phase: p.as_str() }),
        }
    }

    fn pending(&self, op: &'static str) -> Result<ActionToken, SessionError> {
        match self.phase {
            Phase::AwaitingHuman(a) => Ok(a),
            p => Err(SessionError::WrongPhase { op, phase: p.as_str() }),
        }
    }

    /// Apply the human's answer to the pending action. An illegal signal
    /// leaves the session unchanged.
    pub fn handle_human_response(&mut self, signal: HumanSignal) -> Result<(), SessionError> {
        let a = self.pending("handle a signal")?;
        let legal = legal_signals(a);
        if !legal.contains(&signal) {
            return Err(SessionError::IllegalSignal {
                signal: signal.as_str(),
                action: self.plan_model.universe().action_label(a),
                legal: legal.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            });
        }
        self.observe(a, signal.observation());
        Ok(())
    }

    /// A failure the robot detected itself. Debug aid, not a builder signal.
    pub fn inject_failure(&mut self) -> Result<(), SessionError> {
        let a = self.pending("inject a failure")?;
        self.observe(a, Observation::Fail(FailKind::RobotError));
        Ok(())
    }

    fn observe(&mut self, a: ActionToken, obs: Observation) {
        let map = self.belief.map_state();
        let reward = if self.plan_model.is_terminal(&map) {
            0.0
        } else {
            self.plan_model.sample_step(&map, a, &mut self.rng).reward
        };
        self.belief = update_belief(&self.filter_model, &self.belief, a, obs, &self.config, &mut self.rng)
            .unwrap_or_else(|e| {
                self.resets += 1;
                e.into_fallback()
            });
        self.history.push(a, obs);
        self.total_reward += reward;
        self.log.push(LogRow {
            action: self.plan_model.universe().action_label(a),
            observation: obs.to_string(),
            p_hold: self.p_hold(),
            reward,
        });
        self.phase = if self.belief.terminal_fraction(&self.plan_model) >= TERMINAL_MASS {
            Phase::Terminal
        } else {
            Phase::Planning
        };
    }

    pub fn snapshot(&self) -> Snapshot {
        let m = self.belief.marginals(&self.plan_model);
        let u = self.plan_model.universe();
        let leaf_name = |instance: u32, position: u32| {
            self.plan_model.instances()[instance as usize]
                .leaves
                .get(position as usize)
                .map(|l| l.name.clone())
        };
        let subtasks: Vec<SubtaskProb> = m
            .subtasks
            .iter()
            .map(|&((instance, position), probability)| SubtaskProb {
                instance,
                position,
                leaf: leaf_name(instance, position).unwrap_or_else(|| "final".into()),
                probability,
            })
            .collect();
        let (mi, mp) = m.map_subtask();
        Snapshot {
            session_id: self.id.clone(),
            phase: self.phase.as_str().to_string(),
            pending_action: match self.phase {
                Phase::AwaitingHuman(a) => Some(u.action_label(a)),
                _ => None,
            },
            marginals: MarginalsView {
                p_hold: self.p_hold(),
                prefs: u
                    .preferences
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), m.pref(PrefId(i as u16))))
                    .collect(),
                objects: u
                    .objects
                    .iter()
                    .zip(&m.objects)
                    .map(|(o, &p)| (o.name.clone(), p))
                    .collect(),
                subtasks,
            },
            log: self.log.clone(),
            htm_highlight: leaf_name(mi, mp),
            total_reward: self.total_reward,
            belief_resets: self.resets,
        }
    }
}

impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "session {} ({})", self.session_id, self.phase)?;
        for row in &self.log {
            match row.p_hold {
                Some(p) => writeln!(f, "{:<24} {:<20} {p:.2}", row.action, row.observation)?,
                None => writeln!(f, "{:<24} {}", row.action, row.observation)?,
            }
        }
        Ok(())
    }
}
