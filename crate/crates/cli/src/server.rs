//! HTTP service over an immutable [`Snapshot`].

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::config::ServerConfig;
use crate::engine::{QueryError, Snapshot};

#[derive(Clone)]
struct AppState {
    snapshot: Arc<Snapshot>,
    /// Serialized once; the snapshot never changes.
    network: Arc<String>,
}

pub fn router(snapshot: Arc<Snapshot>, static_dir: Option<&Path>) -> Router {
    let network = Arc::new(snapshot.network().to_string());
    let app = Router::new()
        .route("/health", get(health))
        .route("/route", get(route))
        .route("/network", get(network_handler))
        .route("/predict", post(predict))
        .with_state(AppState { snapshot, network });
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { error(StatusCode::NOT_FOUND, "not_found") }),
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(
    snapshot: Arc<Snapshot>,
    cfg: &ServerConfig,
    static_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    writeln!(out, "listening on http://{}", listener.local_addr()?)?;
    out.flush()?;
    axum::serve(listener, router(snapshot, static_dir)).await?;
    Ok(())
}

fn error(status: StatusCode, reason: &str) -> Response {
    (status, Json(json!({ "error": reason }))).into_response()
}

fn query_error(e: QueryError) -> Response {
    let status = match e {
        QueryError::BadRequest(_) => StatusCode::BAD_REQUEST,
        QueryError::NoPath => StatusCode::NOT_FOUND,
        QueryError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
    };
    (status, Json(e.body())).into_response()
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

fn param(q: &HashMap<String, String>, name: &str) -> Result<f64, QueryError> {
    let raw = q
        .get(name)
        .ok_or_else(|| QueryError::BadRequest(format!("missing query parameter `{name}`")))?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| QueryError::BadRequest(format!("query parameter `{name}` is not a finite number: `{raw}`")))
}

async fn route(State(st): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let parsed = (|| {
        let from = (param(&q, "from_lat")?, param(&q, "from_lon")?);
        let to = (param(&q, "to_lat")?, param(&q, "to_lon")?);
        let alpha = if q.contains_key("alpha") { Some(param(&q, "alpha")?) } else { None };
        Ok::<_, QueryError>((from, to, alpha))
    })();
    let (from, to, alpha) = match parsed {
        Ok(p) => p,
        Err(e) => return query_error(e),
    };
    let snap = st.snapshot.clone();
    match tokio::task::spawn_blocking(move || snap.route(from, to, alpha)).await {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => query_error(e),
        Err(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "route worker failed"),
    }
}

async fn network_handler(State(st): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/geo+json")], st.network.as_str().to_owned()).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    features: BTreeMap<String, f64>,
}

async fn predict(State(st): State<AppState>, body: Bytes) -> Response {
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &format!("invalid body: {e}")),
    };
    match st.snapshot.predict(&req.features) {
        Ok(p) => Json(p).into_response(),
        Err(e) => query_error(e),
    }
}
