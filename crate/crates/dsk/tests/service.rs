mod support;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dsk::formats::save_index;
use dsk::pipeline::{caption_index_inputs, caption_vectors, CaptionFeatures};
use dsk::query::{SearchResponse, Snapshot};
use dsk::service::{router, AppState, ServiceConfig};
use dsk_core::features::HashedTextFeaturizer;
use dsk_core::joint::JointEmbeddingModel;
use dsk_core::retrieval::{build_index, query_text, IndexMode, VectorIndex};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const DIM: usize = 64;

fn fixture_index(n_entries: usize) -> VectorIndex {
    let f = HashedTextFeaturizer::with_dim(DIM).unwrap();
    let entries = &support::entries()[..n_entries];
    let vectors = caption_vectors(entries, &CaptionFeatures::Hashed(&f)).unwrap();
    build_index(
        IndexMode::CaptionBased,
        &JointEmbeddingModel::identity(DIM),
        &caption_index_inputs(entries, vectors),
    )
    .unwrap()
}

fn app_with(index_path: &Path, n_entries: usize) -> (Router, Arc<AppState>) {
    save_index(index_path, &fixture_index(n_entries)).unwrap();
    let config = ServiceConfig {
        index: Some(index_path.to_path_buf()),
        request_log: false,
        ..ServiceConfig::default()
    };
    let snapshot = config.source().load().unwrap();
    let state = Arc::new(AppState::new(&config, snapshot));
    (router(state.clone(), &[]), state)
}

async fn call(app: &Router, method: &str, uri: &str) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn encode(q: &str) -> String {
    q.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

#[tokio::test]
async fn health_reports_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(&dir.path().join("i.dski"), 3);
    let (status, body) = call(&app, "GET", "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["index_size"], 3);
    assert_eq!(body["mode"], "caption_based");
    assert_eq!(body["default_k"], 10);
    assert_eq!(body["max_k"], 100);
    assert_eq!(call(&app, "GET", "/api/health").await.1, body);
}

#[tokio::test]
async fn fresh_service_without_index_is_empty() {
    let config = ServiceConfig {
        request_log: false,
        ..ServiceConfig::default()
    };
    let state = Arc::new(AppState::new(&config, config.source().load().unwrap()));
    let app = router(state, &[]);
    assert_eq!(call(&app, "GET", "/api/health").await.1["index_size"], 0);
    let (status, body) = call(&app, "GET", "/api/search?q=dog").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["results"], serde_json::json!([]));
}

#[tokio::test]
async fn search_matches_in_process_query_text() {
    let dir = tempfile::tempdir().unwrap();
    let (app, state) = app_with(&dir.path().join("i.dski"), 3);
    let snap = state.snapshot();
    let mut queries: Vec<String> = support::CAPTIONS
        .iter()
        .flat_map(|(_, c)| c.iter().map(|s| s.to_string()))
        .collect();
    queries.extend(["Dog!", "a bus", "fruit and a dog", "  Table  "].map(String::from));
    queries.truncate(20);
    for (i, q) in queries.iter().enumerate() {
        let k = 1 + i % 3;
        let (status, body) = call(&app, "GET", &format!("/api/search?q={}&k={k}", encode(q))).await;
        assert_eq!(status, StatusCode::OK, "{q}");
        let got: SearchResponse = serde_json::from_value(body).unwrap();
        let want = query_text(&snap.index, &snap.model, &snap.featurizer, q, k).unwrap();
        let expected = snap.response(q, &want, got.took_ms);
        assert_eq!(got, expected, "{q}");
    }
    let (_, body) = call(&app, "GET", &format!("/api/search?q={}", encode("a crowded avenue"))).await;
    assert_eq!(body["results"][0]["image_id"], "city 02");
    assert_eq!(body["results"][0]["distance"], 0.0);
    assert_eq!(body["results"][0]["best_caption"], "a crowded avenue");
    assert_eq!(body["query"], "a crowded avenue");
}

#[tokio::test]
async fn search_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(&dir.path().join("i.dski"), 3);
    for (uri, code) in [
        ("/api/search", "empty_query"),
        ("/api/search?q=", "empty_query"),
        ("/api/search?q=%20%20&k=3", "empty_query"),
        ("/api/search?q=dog&k=0", "bad_k"),
        ("/api/search?q=dog&k=101", "bad_k"),
        ("/api/search?q=dog&k=-1", "bad_k"),
        ("/api/search?q=dog&k=ten", "bad_k"),
    ] {
        let (status, body) = call(&app, "GET", uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(body["error"], code, "{uri}");
        assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let (status, body) = call(&app, "GET", "/api/search?q=dog&k=100").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["results"].as_array().unwrap().len(), 3);
    let (status, body) = call(&app, "GET", "/api/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}

#[tokio::test]
async fn image_metadata_and_escaped_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(&dir.path().join("i.dski"), 3);
    for (id, _) in support::CAPTIONS {
        let (status, body) = call(&app, "GET", &format!("/api/images/{}", encode(id))).await;
        assert_eq!(status, StatusCode::OK, "{id}");
        assert_eq!(body["image_id"], id);
        assert_eq!(body["captions"].as_array().unwrap().len(), 5);
        assert!(body["uri"].as_str().unwrap().starts_with("https://img.example/"));
    }
    let (status, body) = call(&app, "GET", "/api/images/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}

#[tokio::test]
async fn reload_swaps_or_keeps_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("i.dski");
    let (app, state) = app_with(&path, 2);

    let (status, body) = call(&app, "POST", "/api/admin/reload").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!({"reloaded": true, "index_size": 2}));

    save_index(&path, &fixture_index(3)).unwrap();
    let (_, body) = call(&app, "POST", "/api/admin/reload").await;
    assert_eq!(body["index_size"], 3);
    let before = call(&app, "GET", "/api/search?q=fruit&k=3").await.1;

    // A search holding the old snapshot is unaffected by the swap.
    let held = state.snapshot();
    std::fs::write(&path, b"DSKI garbage").unwrap();
    let (status, body) = call(&app, "POST", "/api/admin/reload").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "reload_failed");
    assert!(Arc::ptr_eq(&held, &state.snapshot()));
    assert_eq!(call(&app, "GET", "/api/health").await.1["index_size"], 3);
    let mut after = call(&app, "GET", "/api/search?q=fruit&k=3").await.1;
    after["took_ms"] = before["took_ms"].clone();
    assert_eq!(after, before);
}

#[tokio::test]
async fn cors_headers_present() {
    let dir = tempfile::tempdir().unwrap();
    let (_, state) = app_with(&dir.path().join("i.dski"), 1);
    let app = router(state, &["http://ui.local".to_string()]);
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://ui.local")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://ui.local");
}

#[test]
fn snapshot_rejects_model_index_mismatch() {
    let index = fixture_index(1);
    assert!(Snapshot::new(index, Some(JointEmbeddingModel::identity(8)), 2).is_err());
}
