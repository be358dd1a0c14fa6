use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

async fn spawn_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(supportive_server::serve_listener(listener));
    format!("{addr}")
}

fn start_message() -> Value {
    json!({
        "v": 1,
        "type": "start",
        "config": {
            "benchmark": "leg",
            "search": {"simulations": 100, "particles": 100},
            "seed": 3
        }
    })
}

async fn next_json<S>(ws: &mut S) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .expect("no reply")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_session_round_trip() {
    let addr = spawn_server().await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();

    ws.send(Message::Text(start_message().to_string().into())).await.unwrap();
    let state = next_json(&mut ws).await;
    assert_eq!(state["type"], "state");
    assert_eq!(state["v"], 1);
    assert_eq!(state["phase"], "awaiting-human");
    let prompt = next_json(&mut ws).await;
    assert_eq!(prompt["type"], "prompt");
    assert_eq!(prompt["step"], 0);

    // bad version is answered, and the connection stays usable
    ws.send(Message::Text(r#"{"v": 2, "type": "snapshot"}"#.into())).await.unwrap();
    let err = next_json(&mut ws).await;
    assert_eq!(err["type"], "error");
    assert_eq!(err["code"], "version");

    ws.send(Message::Text(json!({"v": 1, "type": "signal", "signal": "ok"}).to_string().into()))
        .await
        .unwrap();
    let state = next_json(&mut ws).await;
    assert_eq!(state["type"], "state");
    assert_eq!(state["log"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_and_direct_handler_agree() {
    use supportive_core::session::{handle_message, ClientMessage};
    let addr = spawn_server().await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws.send(Message::Text(start_message().to_string().into())).await.unwrap();
    let over_wire = [next_json(&mut ws).await, next_json(&mut ws).await];

    let mut slot = None;
    let msg = ClientMessage::from_json(&start_message().to_string()).unwrap();
    let sid = over_wire[0]["session_id"].as_str().unwrap().to_string();
    let direct: Vec<Value> = handle_message(&mut slot, &sid, msg)
        .iter()
        .map(|m| serde_json::from_str(&m.to_json()).unwrap())
        .collect();
    assert_eq!(direct, over_wire);
}

#[tokio::test(flavor = "multi_thread")]
async fn long_poll_fallback() {
    let addr = spawn_server().await;
    let http = reqwest::Client::new();
    let base = format!("http://{addr}");

    let health: Value = http.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");

    let created = http.post(format!("{base}/sessions")).send().await.unwrap();
    assert_eq!(created.status(), 201);
    let id = created.json::<Value>().await.unwrap()["session"].as_str().unwrap().to_string();

    // nothing queued yet: a short poll times out empty
    let empty: Value = http
        .get(format!("{base}/sessions/{id}/events?since=0&wait_ms=50"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(empty["events"], json!([]));
    assert_eq!(empty["next"], 0);

    // a waiting poll is woken by the reply to a posted message
    let poll = {
        let http = http.clone();
        let url = format!("{base}/sessions/{id}/events?since=0&wait_ms=20000");
        tokio::spawn(async move { http.get(url).send().await.unwrap().json::<Value>().await.unwrap() })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    let posted = http
        .post(format!("{base}/sessions/{id}/messages"))
        .body(start_message().to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(posted.status(), 202);
    assert_eq!(posted.json::<Value>().await.unwrap()["next"], 2);
    let woken = poll.await.unwrap();
    let events = woken["events"].as_array().unwrap();
    assert!(!events.is_empty());
    assert_eq!(events[0]["type"], "state");

    let all: Value = http
        .get(format!("{base}/sessions/{id}/events?since=1&wait_ms=0"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(all["events"][0]["type"], "prompt");
    assert_eq!(all["next"], 2);

    let gone = http.delete(format!("{base}/sessions/{id}")).send().await.unwrap();
    assert_eq!(gone.status(), 204);
    let missing = http
        .post(format!("{base}/sessions/{id}/messages"))
        .body(start_message().to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);
}
