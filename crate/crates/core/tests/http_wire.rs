//! Wire-format checks for the HTTP provider clients against an in-process
//! mock server.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use revkit_core::embedding::{embed_texts, Embedder, HttpEmbedder, HttpEmbedderConfig};
use revkit_core::llm::{ChatModel, ChatRequest, HttpChatConfig, HttpChatModel, Sampling};
use revkit_core::retrieval::{HttpScorer, HttpScorerConfig, Scorer};
use revkit_core::Error;
use serde_json::{json, Value};

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

fn record(seen: &Seen, headers: &HeaderMap, body: &Value) {
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    seen.lock().unwrap().push((auth, body.clone()));
}

async fn embeddings(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    record(&seen, &headers, &body);
    let inputs = body["input"].as_array().unwrap();
    // Answer out of order to exercise index-based reassembly.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"index": i, "embedding": [t.as_str().unwrap().len() as f32, 1.0, i as f32]}))
        .collect();
    Json(json!({"object": "list", "data": data}))
}

async fn chat(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    record(&seen, &headers, &body);
    let prompt = body["messages"][0]["content"].as_str().unwrap();
    Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": format!("echo: {prompt}")}}]}))
}

async fn score(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    record(&seen, &headers, &body);
    let n = body["texts"].as_array().unwrap().len();
    Json(json!({"scores": (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect::<Vec<_>>()}))
}

async fn broken() -> (StatusCode, &'static str) {
    (StatusCode::INTERNAL_SERVER_ERROR, "boom")
}

async fn out_of_range(Json(body): Json<Value>) -> Json<Value> {
    let n = body["texts"].as_array().unwrap().len();
    Json(json!({"scores": vec![1.5; n]}))
}

fn spawn() -> (SocketAddr, Seen) {
    let seen: Seen = Arc::default();
    let app = Router::new()
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/chat/completions", post(chat))
        .route("/score", post(score))
        .route("/broken", post(broken))
        .route("/bad-score", post(out_of_range))
        .with_state(seen.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (rx.recv().unwrap(), seen)
}

fn closed_port() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/x")
}

#[test]
fn embeddings_request_and_batching() {
    let (addr, seen) = spawn();
    let e = HttpEmbedder::new(HttpEmbedderConfig {
        url: format!("http://{addr}/v1/embeddings"),
        model: "emb-model".into(),
        token: Some("secret".into()),
        timeout_secs: 5,
        batch_size: 2,
    })
    .unwrap();
    let texts: Vec<String> = ["a", "bb", "ccc", "dddd", "eeeee"].iter().map(|s| s.to_string()).collect();
    let vs = embed_texts(&e, &texts).unwrap();
    assert_eq!(vs.len(), 5);
    for (i, v) in vs.iter().enumerate() {
        assert_eq!(v.values()[0], (i + 1) as f32);
        assert_eq!(v.model_id(), "emb-model");
    }
    assert_eq!(e.model_id(), "emb-model");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].0.as_deref(), Some("Bearer secret"));
    assert_eq!(seen[0].1, json!({"model": "emb-model", "input": ["a", "bb"]}));
}

#[test]
fn chat_request_fields() {
    let (addr, seen) = spawn();
    let mk = |send_top_k| {
        HttpChatModel::new(HttpChatConfig {
            url: format!("http://{addr}/v1/chat/completions"),
            model: "llm".into(),
            token: None,
            timeout_secs: 5,
            send_top_k,
        })
        .unwrap()
    };
    let reply = mk(false).complete(&ChatRequest::user("hello", Sampling::default(), Some(7))).unwrap();
    assert_eq!(reply, "echo: hello");
    mk(true).complete(&ChatRequest::user("again", Sampling::default(), None)).unwrap();
    let seen = seen.lock().unwrap();
    let first = &seen[0].1;
    assert_eq!(first["model"], "llm");
    assert_eq!(first["messages"], json!([{"role": "user", "content": "hello"}]));
    assert_eq!((first["temperature"].as_f64(), first["top_p"].as_f64()), (Some(0.8), Some(0.9)));
    assert_eq!(first["max_tokens"], 8192);
    assert_eq!(first["seed"], 7);
    assert!(first.get("top_k").is_none());
    assert!(seen[0].0.is_none());
    assert!(seen[1].1.get("seed").is_none());
    assert_eq!(seen[1].1["top_k"], 50);
}

#[test]
fn scorer_batches_preserve_order() {
    let (addr, seen) = spawn();
    let s = HttpScorer::new(HttpScorerConfig {
        url: format!("http://{addr}/score"),
        token: None,
        timeout_secs: 5,
        batch_size: 3,
        max_in_flight: 2,
    })
    .unwrap();
    let texts: Vec<String> = (0..7).map(|i| format!("t{i}")).collect();
    let scores = s.score("q", &texts).unwrap();
    assert_eq!(scores, vec![1.0, 0.5, 1.0 / 3.0, 1.0, 0.5, 1.0 / 3.0, 1.0]);
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(seen.lock().unwrap().iter().all(|(_, b)| b["query"] == "q"));
}

#[test]
fn failure_classification() {
    let (addr, _) = spawn();
    let chat = HttpChatModel::new(HttpChatConfig {
        url: format!("http://{addr}/broken"),
        model: "m".into(),
        token: None,
        timeout_secs: 5,
        send_top_k: false,
    })
    .unwrap();
    assert!(matches!(chat.complete(&ChatRequest::user("x", Sampling::default(), None)), Err(Error::ProviderError(_))));

    let down = HttpChatModel::new(HttpChatConfig { url: closed_port(), model: "m".into(), token: None, timeout_secs: 5, send_top_k: false })
        .unwrap();
    assert!(matches!(down.complete(&ChatRequest::user("x", Sampling::default(), None)), Err(Error::ProviderUnavailable(_))));

    let emb = HttpEmbedder::new(HttpEmbedderConfig { url: closed_port(), model: "m".into(), token: None, timeout_secs: 5, batch_size: 4 })
        .unwrap();
    assert!(matches!(emb.embed_batch(&["x".into()]), Err(Error::ProviderUnavailable(_))));

    let scorer = |path: &str| {
        HttpScorer::new(HttpScorerConfig { url: path.to_string(), token: None, timeout_secs: 5, batch_size: 8, max_in_flight: 1 }).unwrap()
    };
    assert!(matches!(scorer(&closed_port()).score("q", &["a".into()]), Err(Error::ScorerUnavailable(_))));
    assert!(matches!(scorer(&format!("http://{addr}/broken")).score("q", &["a".into()]), Err(Error::ScorerUnavailable(_))));
    assert!(matches!(scorer(&format!("http://{addr}/bad-score")).score("q", &["a".into()]), Err(Error::ProviderError(_))));
}
