use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use absa_core::DomainTaxonomy;
use absa_gateway::store::{completed_ids, read_predictions, PredictionWriter};
use absa_gateway::{emit_json_schema, run_batch, EndpointConfig, GatewayError, PromptItem};
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

const KEY_ENV: &str = "ABSA_GATEWAY_TEST_KEY";
const KEY: &str = "sk-test-0123456789";

#[derive(Default)]
struct Mock {
    bodies: Mutex<Vec<String>>,
    auth: Mutex<Vec<String>>,
    hits: Mutex<HashMap<String, usize>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

/// User content drives behavior: "429xN:..." fails N times with 429, "500:..."
/// always fails, "400:..." fails without retry, "sleep:N:..." waits N ms.
async fn handler(State(mock): State<Arc<Mock>>, headers: HeaderMap, body: String) -> impl IntoResponse {
    let now = mock.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    mock.peak.fetch_max(now, Ordering::SeqCst);
    mock.bodies.lock().unwrap().push(body.clone());
    let auth = headers.get("authorization").map(|h| h.to_str().unwrap().to_string()).unwrap_or_default();
    mock.auth.lock().unwrap().push(auth);
    let parsed: Value = serde_json::from_str(&body).unwrap();
    let user = parsed["messages"][1]["content"].as_str().unwrap().to_string();
    let hit = {
        let mut hits = mock.hits.lock().unwrap();
        let n = hits.entry(user.clone()).or_default();
        *n += 1;
        *n
    };
    let mut response = (StatusCode::OK, Json(json!({"choices": [{"message": {"content": format!("echo:{user}")}}]})))
        .into_response();
    if let Some(rest) = user.strip_prefix("sleep:") {
        let ms: u64 = rest.split(':').next().unwrap().parse().unwrap();
        tokio::time::sleep(Duration::from_millis(ms)).await;
    } else if let Some(rest) = user.strip_prefix("429x") {
        let n: usize = rest.split(':').next().unwrap().parse().unwrap();
        if hit <= n {
            response = (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response();
        }
    } else if user.starts_with("500:") {
        response = (StatusCode::INTERNAL_SERVER_ERROR, "boom").into_response();
    } else if user.starts_with("400:") {
        response = (StatusCode::BAD_REQUEST, "bad").into_response();
    }
    mock.in_flight.fetch_sub(1, Ordering::SeqCst);
    response
}

async fn serve() -> (SocketAddr, Arc<Mock>) {
    let mock = Arc::new(Mock::default());
    let app = Router::new().route("/v1/chat/completions", post(handler)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (addr, mock)
}

fn config(addr: SocketAddr) -> EndpointConfig {
    std::env::set_var(KEY_ENV, KEY);
    let mut c = EndpointConfig::new(format!("http://{addr}/v1"), "test-model", KEY_ENV);
    c.retry_base_ms = 1;
    c
}

fn prompt(id: &str, user: &str) -> PromptItem {
    PromptItem { sample_id: id.into(), system: "sys".into(), user: user.into() }
}

#[tokio::test]
async fn results_come_back_in_input_order() {
    let (addr, mock) = serve().await;
    let prompts: Vec<PromptItem> =
        (0..10).map(|i| prompt(&format!("s{i}"), &format!("sleep:{}:{i}", (10 - i) * 15))).collect();
    let mut arrival = Vec::new();
    let out = run_batch(&prompts, &config(addr), None, |p| arrival.push(p.sample_id.clone())).await.unwrap();
    let ids: Vec<&str> = out.iter().map(|p| p.sample_id.as_str()).collect();
    let expected: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
    assert_eq!(ids, expected);
    assert_ne!(arrival, expected, "completion order should differ from input order");
    for (p, q) in out.iter().zip(&prompts) {
        assert_eq!(p.raw_output, format!("echo:{}", q.user));
        assert_eq!(p.attempt_count, 1);
        assert!(p.error.is_none());
    }
    assert!(mock.peak.load(Ordering::SeqCst) <= 4);
}

#[tokio::test]
async fn retries_429_and_records_attempts() {
    let (addr, _mock) = serve().await;
    let out = run_batch(&[prompt("a", "429x2:hello")], &config(addr), None, |_| {}).await.unwrap();
    assert_eq!(out[0].attempt_count, 3);
    assert_eq!(out[0].error, None);
    assert_eq!(out[0].raw_output, "echo:429x2:hello");
}

#[tokio::test]
async fn exhausted_retries_become_error_records() {
    let (addr, mock) = serve().await;
    let out = run_batch(&[prompt("a", "500:x"), prompt("b", "400:y")], &config(addr), None, |_| {}).await.unwrap();
    assert_eq!(out[0].attempt_count, 4);
    assert_eq!(out[0].error.as_deref(), Some("http 500"));
    assert!(out[0].raw_output.is_empty());
    assert_eq!(out[1].attempt_count, 1);
    assert!(out[1].error.as_deref().unwrap().starts_with("http 400"));
    assert_eq!(mock.bodies.lock().unwrap().len(), 5);
}

#[tokio::test]
async fn key_travels_only_in_header_and_schema_only_when_asked() {
    let (addr, mock) = serve().await;
    let taxonomy = DomainTaxonomy::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/ps_taxonomy.json"),
    )
    .unwrap();
    let schema = emit_json_schema(&taxonomy);
    let mut cfg = config(addr);
    run_batch(&[prompt("a", "plain")], &cfg, Some(&schema), |_| {}).await.unwrap();
    cfg.structured_output = true;
    run_batch(&[prompt("b", "structured")], &cfg, Some(&schema), |_| {}).await.unwrap();

    let bodies = mock.bodies.lock().unwrap().clone();
    assert_eq!(bodies.len(), 2);
    for b in &bodies {
        assert!(!b.contains(KEY));
    }
    assert!(mock.auth.lock().unwrap().iter().all(|a| a == &format!("Bearer {KEY}")));
    let plain: Value = serde_json::from_str(&bodies[0]).unwrap();
    assert!(plain.get("response_format").is_none());
    assert_eq!(plain["temperature"], json!(0.0));
    let structured: Value = serde_json::from_str(&bodies[1]).unwrap();
    let sent = &structured["response_format"]["json_schema"]["schema"];
    assert_eq!(sent, &schema);
    let categories = &sent["properties"]["aspect_based_sentiment_analysis"]["items"]["properties"]["aspect_category"]["enum"];
    assert_eq!(categories.as_array().unwrap().len(), 14);
}

#[tokio::test]
async fn config_errors_come_before_requests() {
    let (addr, mock) = serve().await;
    let mut cfg = config(addr);
    cfg.api_key_env = "ABSA_GATEWAY_TEST_MISSING".into();
    let err = run_batch(&[prompt("a", "x")], &cfg, None, |_| {}).await.unwrap_err();
    assert!(matches!(err, GatewayError::Config(_)));
    let mut cfg = config(addr);
    cfg.base_url.clear();
    assert!(matches!(run_batch(&[prompt("a", "x")], &cfg, None, |_| {}).await, Err(GatewayError::Config(_))));
    assert!(mock.bodies.lock().unwrap().is_empty());
    assert!(run_batch(&[], &config(addr), None, |_| {}).await.unwrap().is_empty());
}

#[tokio::test]
async fn resume_skips_completed_ids() {
    let (addr, mock) = serve().await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.jsonl");
    let prompts: Vec<PromptItem> = (0..10).map(|i| prompt(&format!("s{i}"), &format!("u{i}"))).collect();
    let mut writer = PredictionWriter::append(&path).unwrap();
    run_batch(&prompts[..5], &config(addr), None, |p| writer.write(p).unwrap()).await.unwrap();

    let done = completed_ids(&read_predictions(&path).unwrap());
    let pending: Vec<PromptItem> = prompts.iter().filter(|p| !done.contains(&p.sample_id)).cloned().collect();
    assert_eq!(pending.len(), 5);
    run_batch(&pending, &config(addr), None, |p| writer.write(p).unwrap()).await.unwrap();
    assert_eq!(mock.bodies.lock().unwrap().len(), 10);

    let done = completed_ids(&read_predictions(&path).unwrap());
    assert_eq!(done.len(), 10);
    assert!(prompts.iter().all(|p| done.contains(&p.sample_id)));
}
