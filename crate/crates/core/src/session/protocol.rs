//! JSON messages exchanged with the builder's console.
//!
//! Every message carries `"v"` (the protocol version) and `"type"`.
//!
//! Client to server: `start {config}`, `signal {signal: ok|error|done}`,
//! `reset`, `snapshot`, and the debug messages `inject-failure` (a failure
//! the robot noticed itself) and `propose {action}` (operator override).
//!
//! Server to client: `prompt {action, legal_signals, step}`,
//! `state {session_id, phase, pending_action, marginals, log, htm_highlight, ...}`,
//! `error {code, message}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{create_session, HumanSignal, Phase, SessionError, SessionState, Snapshot};
use crate::harness::{build_benchmark, BenchmarkError, BenchmarkParams};
use crate::htm::{parse_htm, HtmParseError};
use crate::model::{compile, CompileError, CompilerConfig, ConfigError, NoiseConfig};
use crate::planner::{SearchConfig, SearchConfigError};

pub const PROTOCOL_VERSION: u32 = 1;

/// What a `start` message asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Built-in model name; ignored when `htm` is given.
    pub benchmark: String,
    /// Inline task-model document.
    pub htm: Option<serde_json::Value>,
    /// Prior probability of the hold preference.
    pub p_hold: Option<f64>,
    /// Noise the belief filter expects.
    pub noise: NoiseConfig,
    pub search: SearchConfig,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            benchmark: "table".into(),
            htm: None,
            p_hold: None,
            noise: NoiseConfig::ENVIRONMENT,
            search: SearchConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionSetupError {
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Parse(#[from] HtmParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Search(#[from] SearchConfigError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("p_hold given but the model declares no hold preference")]
    NoHoldPreference,
}

/// A session together with the configuration that created it, so it can be
/// reset.
#[derive(Clone, Debug)]
pub struct LoadedSession {
    pub config: SessionConfig,
    pub session: SessionState,
}

impl LoadedSession {
    pub fn start(id: &str, config: SessionConfig) -> Result<Self, SessionSetupError> {
        config.search.validate()?;
        config.noise.validate()?;
        let htm = match &config.htm {
            Some(doc) => parse_htm(&doc.to_string())?,
            None => build_benchmark(&config.benchmark, &BenchmarkParams::default())?,
        };
        let mut cc = CompilerConfig {
            noise: config.noise,
            ..CompilerConfig::default()
        };
        if let Some(p) = config.p_hold {
            if htm.universe.preference("hold").is_none() {
                return Err(SessionSetupError::NoHoldPreference);
            }
            cc.preference_prior.insert("hold".into(), p);
        }
        let model = compile(&htm, &cc)?;
        let session = create_session(id, &model, config.search.clone(), config.seed);
        Ok(LoadedSession { config, session })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    Start {
        #[serde(default)]
        config: SessionConfig,
    },
    Signal {
        signal: HumanSignal,
    },
    Reset,
    Snapshot,
    InjectFailure,
    Propose {
        action: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub action: String,
    pub legal_signals: Vec<HumanSignal>,
    /// Index of the step this prompt asks about.
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    BadMessage,
    Version,
    NoSession,
    WrongPhase,
    IllegalSignal,
    Setup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    Prompt(Prompt),
    State(Snapshot),
    Error { code: ErrorCode, message: String },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

impl ServerMessage {
    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            v: PROTOCOL_VERSION,
            body: self,
        })
        .expect("server messages serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<Envelope<ServerMessage>>(text).map(|e| e.body)
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            v: PROTOCOL_VERSION,
            body: self,
        })
        .expect("client messages serialize")
    }

    /// Parse a versioned client message; the error is the reply to send.
    pub fn from_json(text: &str) -> Result<Self, ServerMessage> {
        #[derive(Deserialize)]
        struct Version {
            v: Option<u32>,
        }
        let v = serde_json::from_str::<Version>(text)
            .map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))?
            .v;
        match v {
            Some(PROTOCOL_VERSION) => {}
            Some(v) => {
                return Err(ServerMessage::error(
                    ErrorCode::Version,
                    format!("unsupported protocol version {v}; this server speaks {PROTOCOL_VERSION}"),
                ))
            }
            None => {
                return Err(ServerMessage::error(
                    ErrorCode::Version,
                    format!("missing protocol version \"v\"; this server speaks {PROTOCOL_VERSION}"),
                ))
            }
        }
        serde_json::from_str::<Envelope<ClientMessage>>(text)
            .map(|e| e.body)
            .map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))
    }
}

fn session_error(e: SessionError) -> ServerMessage {
    let code = match e {
        SessionError::IllegalSignal { .. } => ErrorCode::IllegalSignal,
        SessionError::UnknownAction(_) => ErrorCode::BadMessage,
        SessionError::WrongPhase { .. } => ErrorCode::WrongPhase,
    };
    ServerMessage::error(code, e.to_string())
}

/// State, then the next prompt unless the task is over.
fn state_and_prompt(s: &mut SessionState) -> Vec<ServerMessage> {
    let mut out = Vec::with_capacity(2);
    let prompt = match s.phase() {
        Phase::Planning => Some(s.advance().expect("planning phase")),
        _ => None,
    };
    out.push(ServerMessage::State(s.snapshot()));
    if let Some(p) = prompt {
        out.push(ServerMessage::Prompt(p));
    }
    out
}

/// Apply one client message to the connection's session slot and return the
/// replies in order. After every accepted message the client receives the
/// new state, followed by a prompt whenever the robot is waiting for an answer.
pub fn handle_message(slot: &mut Option<LoadedSession>, id: &str, msg: ClientMessage) -> Vec<ServerMessage> {
    match msg {
        ClientMessage::Start { config } => match LoadedSession::start(id, config) {
            Ok(loaded) => {
                let loaded = slot.insert(loaded);
                state_and_prompt(&mut loaded.session)
            }
            Err(e) => vec![ServerMessage::error(ErrorCode::Setup, e.to_string())],
        },
        ClientMessage::Reset => match slot.take() {
            Some(old) => handle_message(slot, old.session.id(), ClientMessage::Start { config: old.config }),
            None => vec![ServerMessage::error(ErrorCode::NoSession, "no session to reset")],
        },
        other => {
            let Some(loaded) = slot.as_mut() else {
                return vec![ServerMessage::error(ErrorCode::NoSession, "send start first")];
            };
            let s = &mut loaded.session;
            let result = match other {
                ClientMessage::Signal { signal } => s.handle_human_response(signal),
                ClientMessage::InjectFailure => s.inject_failure(),
                ClientMessage::Snapshot => {
                    let mut out = vec![ServerMessage::State(s.snapshot())];
                    if let Phase::AwaitingHuman(a) = s.phase() {
                        out.push(ServerMessage::Prompt(Prompt {
                            action: s.model().universe().action_label(a),
                            legal_signals: super::legal_signals(a),
                            step: s.history().len(),
                        }));
                    }
                    return out;
                }
                ClientMessage::Propose { action } => {
                    return match s.propose(&action) {
                        Ok(p) => vec![ServerMessage::State(s.snapshot()), ServerMessage::Prompt(p)],
                        Err(e) => vec![session_error(e)],
                    };
                }
                ClientMessage::Start { .. } | ClientMessage::Reset => unreachable!(),
            };
            match result {
                Ok(()) => state_and_prompt(s),
                Err(e) => vec![session_error(e)],
            }
        }
    }
}
