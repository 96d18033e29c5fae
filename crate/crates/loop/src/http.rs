//! HTTP+JSON API over [`LoopService`].

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::detector::Detector;
use crate::item::DecisionInput;
use crate::service::{ExportFilter, LoopService, QueueQuery};
use crate::LoopError;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<LoopService>,
    /// Detector used by `POST /runs`; without one the route answers 503.
    pub detector: Option<Arc<dyn Detector>>,
    /// Accepted bearer tokens. Empty disables authentication.
    pub tokens: Arc<Vec<String>>,
}

impl IntoResponse for LoopError {
    fn into_response(self) -> Response {
        let status = match &self {
            LoopError::Validation(_) | LoopError::LabelledPost | LoopError::InvalidQuery(_) => StatusCode::BAD_REQUEST,
            LoopError::InvalidDecision(_) => StatusCode::UNPROCESSABLE_ENTITY,
            LoopError::UnknownItem(_) => StatusCode::NOT_FOUND,
            LoopError::AlreadyDecided(_) | LoopError::PostIdConflict { .. } => StatusCode::CONFLICT,
            LoopError::Journal(_) | LoopError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.tag(), "message": self.to_string() }))).into_response()
    }
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": "BadRequest", "message": message }))).into_response()
}

async fn auth(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if app.tokens.is_empty() {
        return next.run(req).await;
    }
    let presented =
        req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(t) if app.tokens.iter().any(|ok| ok == t) => next.run(req).await,
        _ => (
            StatusCode::UNAUTHORIZED,
            [(header::WWW_AUTHENTICATE, "Bearer")],
            Json(json!({ "error": "Unauthorized", "message": "missing or unknown bearer token" })),
        )
            .into_response(),
    }
}

async fn health(State(app): State<AppState>) -> Response {
    let s = app.service.state();
    Json(json!({ "status": "ok", "items": s.len(), "last_seq": s.last_seq })).into_response()
}

async fn ingest(State(app): State<AppState>, body: String) -> Response {
    match app.service.ingest_json(&body) {
        Ok(r) => {
            let status = if r.duplicate { StatusCode::OK } else { StatusCode::CREATED };
            (status, Json(r)).into_response()
        }
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    #[serde(default)]
    item_ids: Option<Vec<String>>,
}

async fn run(State(app): State<AppState>, body: String) -> Response {
    let req: RunRequest = if body.trim().is_empty() {
        RunRequest::default()
    } else {
        match serde_json::from_str(&body) {
            Ok(r) => r,
            Err(e) => return bad_request(e.to_string()),
        }
    };
    let Some(detector) = app.detector.clone() else {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "NoDetector", "message": "no detector configured" })),
        )
            .into_response();
    };
    let service = app.service.clone();
    let joined =
        tokio::task::spawn_blocking(move || service.run_detection(req.item_ids.as_deref(), detector.as_ref())).await;
    match joined {
        Ok(Ok(summary)) => Json(summary).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": "Internal", "message": e.to_string() })))
            .into_response(),
    }
}

async fn queue(
    State(app): State<AppState>,
    q: Result<Query<QueueQuery>, axum::extract::rejection::QueryRejection>,
) -> Response {
    let Query(q) = match q {
        Ok(q) => q,
        Err(e) => return bad_request(e.body_text()),
    };
    match app.service.review_queue(&q) {
        Ok(page) => Json(page).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn item(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.service.item(&id) {
        Some(i) => Json(i).into_response(),
        None => LoopError::UnknownItem(id).into_response(),
    }
}

async fn decide(State(app): State<AppState>, Path(id): Path<String>, body: String) -> Response {
    let decision: DecisionInput = match serde_json::from_str(&body) {
        Ok(d) => d,
        Err(e) => return LoopError::InvalidDecision(e.to_string()).into_response(),
    };
    match app.service.submit_decision(&id, decision) {
        Ok(i) => Json(i).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export(
    State(app): State<AppState>,
    f: Result<Query<ExportFilter>, axum::extract::rejection::QueryRejection>,
) -> Response {
    let Query(filter) = match f {
        Ok(f) => f,
        Err(e) => return bad_request(e.body_text()),
    };
    let mut body = Vec::new();
    match app.service.export(&filter, &mut body) {
        Ok(_) => ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response(),
        Err(e) => e.into_response(),
    }
}

/// Every route except `/health` requires a bearer token when tokens are set.
pub fn router(app: AppState) -> Router {
    let api = Router::new()
        .route("/posts", post(ingest))
        .route("/runs", post(run))
        .route("/review/queue", get(queue))
        .route("/review/{id}", get(item))
        .route("/review/{id}/decision", post(decide))
        .route("/export", get(export))
        .route_layer(middleware::from_fn_with_state(app.clone(), auth));
    Router::new().route("/health", get(health)).merge(api).with_state(app)
}

/// Serves until `shutdown` resolves, then snapshots the journal.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), LoopError> {
    let service = app.service.clone();
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await?;
    service.flush()
}
