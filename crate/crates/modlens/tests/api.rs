use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use modlens::scorer::Scorer;
use modlens::service::{router, AppState, Clock};
use modlens::store::{QueueEntry, Status, Store};
use modlens_core::models::{CellKind, ClassifierConfig, ClassifierModel, EncoderConfig, Pooling};
use modlens_core::rationale::{JointConfig, RationaleModel};
use modlens_core::text::EmbeddingConfig;
use serde_json::{json, Value};
use tower::ServiceExt;

const D: usize = 4;

/// Untrained models; a pinned selection bias makes every token selected.
fn scorer() -> Arc<Scorer> {
    let classifier = ClassifierModel::init(
        ClassifierConfig {
            embedding: EmbeddingConfig { dim: D, min_n: 3, max_n: 5, buckets: 64 },
            encoder: EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 4, layers: 1, bidirectional: false },
            pooling: Pooling::Final,
        },
        1,
    )
    .unwrap();
    let enc = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 3, layers: 1, bidirectional: true };
    let cfg = JointConfig {
        generator: enc,
        classifier: EncoderConfig { bidirectional: false, ..enc },
        z_hidden: 2,
        pinned_selection_bias: Some(60.0),
        ..JointConfig::desk()
    };
    let rationale = RationaleModel::init(cfg, D, 2).unwrap();
    Arc::new(Scorer { classifier, rationale })
}

fn clock() -> Clock {
    Arc::new(|| 1234)
}

fn app(store: Store, with_model: bool) -> axum::Router {
    router(AppState::new(store, with_model.then(scorer), clock()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

fn seeded_store() -> Store {
    let mut s = Store::in_memory();
    for (i, (id, p)) in [("mid", 0.5), ("top", 0.99), ("high", 0.9)].into_iter().enumerate() {
        s.ingest(QueueEntry {
            id: id.into(),
            text: format!("text {id}"),
            probability: p,
            spans: vec![],
            status: Status::Pending,
            reason: None,
            decided_by: None,
            decided_at: None,
            ingested_at: 0,
            seq: i as u64,
        })
        .unwrap();
    }
    s
}

fn queue_ids(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn health_reports_model_state() {
    let (s, v) = call(&app(Store::in_memory(), false), "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["model_loaded"], false);
    let (_, v) = call(&app(Store::in_memory(), true), "GET", "/health", None).await;
    assert_eq!(v["model_loaded"], true);
}

#[tokio::test]
async fn ingest_scores_and_highlights() {
    let app = app(Store::in_memory(), true);
    let (s, v) = call(&app, "POST", "/comments", Some(json!({"id": "c1", "text": "you are  an idiot"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["status"], "pending");
    assert_eq!(v["ingested_at"], 1234);
    let p = v["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    // Every token selected: one span from the first to the last character.
    assert_eq!(v["spans"], json!([{"start_token": 0, "end_token": 3, "start": 0, "end": 17}]));

    let (s, got) = call(&app, "GET", "/comments/c1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(got, v);
}

#[tokio::test]
async fn ingest_errors() {
    let app = app(Store::in_memory(), true);
    let (s, _) = call(&app, "POST", "/comments", Some(json!({"id": "c1", "text": "hello"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = call(&app, "POST", "/comments", Some(json!({"id": "c1", "text": "again"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].is_string());
    let (s, _) = call(&app, "POST", "/comments", Some(json!({"id": "c2", "text": "  "}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/comments", Some(json!({"id": "c4"}))).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn ingest_without_model_is_unavailable() {
    let app = app(Store::in_memory(), false);
    let (s, v) = call(&app, "POST", "/comments", Some(json!({"id": "c1", "text": "hello"}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn queue_ordering_and_filters() {
    let app = app(seeded_store(), false);
    let (s, v) = call(&app, "GET", "/queue", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(queue_ids(&v), ["top", "high", "mid"]);
    let (_, v) = call(&app, "GET", "/queue?min_p=0.95", None).await;
    assert_eq!(queue_ids(&v), ["top"]);
    let (_, v) = call(&app, "GET", "/queue?limit=2", None).await;
    assert_eq!(queue_ids(&v), ["top", "high"]);
    let (s, _) = call(&app, "GET", "/queue?status=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn decisions() {
    let app = app(seeded_store(), false);
    let block = json!({"action": "block", "reason": "insults", "decided_by": "m1"});
    let (s, v) = call(&app, "POST", "/comments/top/decision", Some(block.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "blocked");
    assert_eq!(v["reason"], "insults");
    assert_eq!(v["decided_at"], 1234);

    let (s, again) = call(&app, "POST", "/comments/top/decision", Some(block)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again, v);

    let (s, _) = call(&app, "POST", "/comments/top/decision", Some(json!({"action": "approve"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", "/comments/nope/decision", Some(json!({"action": "approve"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/comments/high/decision", Some(json!({"action": "block"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/comments/high/decision", Some(json!({"action": "block", "reason": "rude"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/comments/high/decision", Some(json!({"action": "approve", "reason": "spam"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (_, v) = call(&app, "GET", "/queue?status=pending", None).await;
    assert_eq!(queue_ids(&v), ["high", "mid"]);
    let (_, v) = call(&app, "GET", "/queue?status=blocked", None).await;
    assert_eq!(queue_ids(&v), ["top"]);
}

#[tokio::test]
async fn unknown_comment_is_not_found() {
    let (s, v) = call(&app(Store::in_memory(), false), "GET", "/comments/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn persisted_decisions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(Store::open(dir.path(), 0).unwrap(), true);
        call(&app, "POST", "/comments", Some(json!({"id": "a", "text": "first comment"}))).await;
        call(&app, "POST", "/comments", Some(json!({"id": "b", "text": "second comment"}))).await;
        call(&app, "POST", "/comments/a/decision", Some(json!({"action": "block", "reason": "spam"}))).await;
    }
    let app = app(Store::open(dir.path(), 0).unwrap(), false);
    let (_, v) = call(&app, "GET", "/comments/a", None).await;
    assert_eq!(v["status"], "blocked");
    let (_, v) = call(&app, "GET", "/comments/b", None).await;
    assert_eq!(v["status"], "pending");
}
