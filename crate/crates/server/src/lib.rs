//! Network endpoint for live sessions.
//!
//! - `GET /ws`: WebSocket. Each connection owns one session; every text frame
//!   is a client message and every reply is sent as its own text frame.
//! - HTTP long-poll fallback for clients without WebSockets:
//!   - `POST /sessions` creates a session and returns `{"v", "session"}`.
//!   - `POST /sessions/{id}/messages` takes one client message; replies are
//!     queued, and the response gives the queue length as `next`.
//!   - `GET /sessions/{id}/events?since=K&wait_ms=T` returns queued replies
//!     from index `K` on, waiting up to `T` ms (default 25000) for one to arrive.
//!   - `DELETE /sessions/{id}` drops the session.
//! - `GET /health`.
//!
//! Message bodies are the versioned JSON of [`supportive_core::session`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use supportive_core::session::{handle_message, ClientMessage, LoadedSession, PROTOCOL_VERSION};
use tokio::net::TcpListener;
use tokio::sync::Notify;

/// Longest a long-poll request may wait.
pub const MAX_WAIT_MS: u64 = 60_000;
const DEFAULT_WAIT_MS: u64 = 25_000;

#[derive(Default)]
struct PollSession {
    slot: tokio::sync::Mutex<Option<LoadedSession>>,
    outbox: Mutex<Vec<String>>,
    notify: Notify,
}

#[derive(Default)]
struct AppState {
    next_id: AtomicU64,
    polled: Mutex<HashMap<String, Arc<PollSession>>>,
}

impl AppState {
    fn fresh_id(&self) -> String {
        format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1)
    }

    fn polled(&self, id: &str) -> Option<Arc<PollSession>> {
        self.polled.lock().expect("session map poisoned").get(id).cloned()
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ws", get(ws_upgrade))
        .route("/sessions", post(create_polled))
        .route("/sessions/{id}", axum::routing::delete(delete_polled))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(poll_events))
        .with_state(Arc::new(AppState::default()))
}

/// Serve on an already bound listener until the process ends.
pub async fn serve_listener(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    serve_listener(TcpListener::bind(addr).await?).await
}

async fn health() -> Json<Value> {
    Json(json!({"v": PROTOCOL_VERSION, "status": "ok"}))
}

/// Parse and apply one client message off the async threads; planning can
/// take a while.
async fn apply(slot: &mut Option<LoadedSession>, id: &str, text: String) -> Vec<String> {
    let mut owned = slot.take();
    let id = id.to_string();
    let (owned, replies) = tokio::task::spawn_blocking(move || {
        let replies = match ClientMessage::from_json(&text) {
            Ok(msg) => handle_message(&mut owned, &id, msg),
            Err(reply) => vec![reply],
        };
        (owned, replies)
    })
    .await
    .expect("session handler panicked");
    *slot = owned;
    replies.iter().map(|m| m.to_json()).collect()
}

async fn ws_upgrade(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    let id = state.fresh_id();
    ws.on_upgrade(move |socket| ws_session(socket, id))
}

async fn ws_session(mut socket: WebSocket, id: String) {
    let mut slot = None;
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        for reply in apply(&mut slot, &id, text).await {
            if socket.send(Message::Text(reply.into())).await.is_err() {
                return;
            }
        }
    }
}

fn not_found(id: &str) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(json!({"v": PROTOCOL_VERSION, "type": "error", "code": "no-session",
                    "message": format!("no session '{id}'")})),
    )
        .into_response()
}

async fn create_polled(State(state): State<Arc<AppState>>) -> Response {
    let id = state.fresh_id();
    state
        .polled
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::default());
    (StatusCode::CREATED, Json(json!({"v": PROTOCOL_VERSION, "session": id}))).into_response()
}

async fn delete_polled(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.polled.lock().expect("session map poisoned").remove(&id) {
        Some(_) => StatusCode::NO_CONTENT.into_response(),
        None => not_found(&id),
    }
}

async fn post_message(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: String) -> Response {
    let Some(session) = state.polled(&id) else {
        return not_found(&id);
    };
    // one message at a time per session
    let mut slot = session.slot.lock().await;
    let replies = apply(&mut slot, &id, body).await;
    let next = {
        let mut outbox = session.outbox.lock().expect("outbox poisoned");
        outbox.extend(replies);
        outbox.len()
    };
    session.notify.notify_waiters();
    (StatusCode::ACCEPTED, Json(json!({"v": PROTOCOL_VERSION, "next": next}))).into_response()
}

#[derive(Deserialize)]
struct PollQuery {
    #[serde(default)]
    since: usize,
    wait_ms: Option<u64>,
}

async fn poll_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PollQuery>,
) -> Response {
    let Some(session) = state.polled(&id) else {
        return not_found(&id);
    };
    let wait = Duration::from_millis(q.wait_ms.unwrap_or(DEFAULT_WAIT_MS).min(MAX_WAIT_MS));
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        // register before checking so a reply queued in between still wakes us
        let notified = session.notify.notified();
        let (events, next) = {
            let outbox = session.outbox.lock().expect("outbox poisoned");
            let from = q.since.min(outbox.len());
            let events: Vec<Value> = outbox[from..]
                .iter()
                .map(|t| serde_json::from_str(t).expect("replies are JSON"))
                .collect();
            (events, outbox.len())
        };
        if !events.is_empty() || tokio::time::Instant::now() >= deadline {
            return Json(json!({"v": PROTOCOL_VERSION, "events": events, "next": next})).into_response();
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            return Json(json!({"v": PROTOCOL_VERSION, "events": [], "next": next})).into_response();
        }
    }
}
