//! HTTP query service.
//!
//! Handlers read the current [`Snapshot`] through an `Arc`, so a reload
//! swaps in a new snapshot without disturbing searches already running on
//! the old one.

mod config;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::{ServiceConfig, ENV_ADDR, ENV_INDEX, ENV_MODEL};

use crate::query::{Snapshot, SnapshotSource};

pub struct AppState {
    pub default_k: usize,
    pub max_k: usize,
    pub request_log: bool,
    source: SnapshotSource,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl AppState {
    pub fn new(config: &ServiceConfig, snapshot: Snapshot) -> Self {
        Self {
            default_k: config.default_k,
            max_k: config.max_k,
            request_log: config.request_log,
            source: config.source(),
            snapshot: RwLock::new(Arc::new(snapshot)),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }
}

/// An error body `{"error": code, "message": text}` with its status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let cors = if cors_origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        cors.allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route("/api/health", get(health))
        .route("/api/search", get(search))
        .route("/api/images/{id}", get(image))
        .route("/api/admin/reload", post(reload))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), request_log))
        .layer(cors)
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snap = state.snapshot();
    Json(json!({
        "status": "ok",
        "index_size": snap.index.len(),
        "mode": snap.index.mode().as_str(),
        "default_k": state.default_k,
        "max_k": state.max_k,
    }))
}

async fn search(
    State(state): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let started = Instant::now();
    let q = params.get("q").map(String::as_str).unwrap_or("");
    if q.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_query",
            "query parameter q is empty",
        ));
    }
    let k = match params.get("k") {
        None => state.default_k,
        Some(raw) => match raw.trim().parse::<usize>() {
            Ok(k) if (1..=state.max_k).contains(&k) => k,
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "bad_k",
                    format!("k must be an integer in 1..={}, got {raw:?}", state.max_k),
                ))
            }
        },
    };
    let snap = state.snapshot();
    let outcome = snap
        .query(q, k)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "search_failed", e.to_string()))?;
    let took_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(Json(snap.response(q, &outcome, took_ms)).into_response())
}

async fn image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let record = snap
        .index
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no image {id:?}")))?;
    Ok(Json(json!({
        "image_id": record.image_id,
        "captions": record.captions,
        "uri": record.uri,
    }))
    .into_response())
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let source = state.source.clone();
    let loaded = tokio::task::spawn_blocking(move || source.load())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload_failed", e.to_string()))?;
    match loaded {
        Ok(snapshot) => {
            let index_size = snapshot.index.len();
            state.publish(snapshot);
            log::info!("reloaded snapshot with {index_size} images");
            Ok(Json(json!({"reloaded": true, "index_size": index_size})).into_response())
        }
        Err(e) => {
            log::warn!("reload failed, keeping the current snapshot: {e}");
            Err(ApiError::new(StatusCode::CONFLICT, "reload_failed", e.to_string()))
        }
    }
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn request_log(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if !state.request_log {
        return next.run(req).await;
    }
    let started = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let query = req.uri().query().map(str::to_string);
    let response = next.run(req).await;
    let ts_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    let line = json!({
        "ts_ms": ts_ms,
        "method": method,
        "path": path,
        "query": query,
        "status": response.status().as_u16(),
        "duration_ms": started.elapsed().as_secs_f64() * 1e3,
    });
    println!("{line}");
    response
}

/// Loads the configured snapshot and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    config.validate()?;
    let source = config.source();
    let snapshot = tokio::task::spawn_blocking(move || source.load()).await??;
    log::info!(
        "serving {} images ({}) on {}",
        snapshot.index.len(),
        snapshot.index.mode().as_str(),
        config.addr
    );
    let state = Arc::new(AppState::new(&config, snapshot));
    let app = router(state, &config.cors_origins);
    let listener = tokio::net::TcpListener::bind(&config.addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
