//! `/v1` HTTP interface.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::engine::{ChatError, Engine, RetrieveRequest};
use crate::session::Sessions;

pub struct AppState {
    pub engine: Arc<Engine>,
    pub sessions: Sessions,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Arc<Self> {
        let sessions = Sessions::new(engine.config.session_capacity, Duration::from_secs(engine.config.session_ttl_secs));
        Arc::new(Self { engine, sessions })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.engine.config.max_message_bytes * 4 + 4096;
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/chat", post(chat))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn error(status: StatusCode, kind: &str, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": { "kind": kind, "message": message.to_string() } }))).into_response()
}

fn chat_error(e: ChatError) -> Response {
    match &e {
        ChatError::TooLarge { .. } => error(StatusCode::PAYLOAD_TOO_LARGE, "too_large", e),
        ChatError::Unavailable(_) => error(StatusCode::SERVICE_UNAVAILABLE, "kb_unavailable", e),
        ChatError::Lm(_) => error(StatusCode::BAD_GATEWAY, "lm_backend", e),
        ChatError::Retrieve(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "retrieval", e),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, "invalid_request", e))
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let e = &state.engine;
    let body = |status: &str| {
        json!({
            "status": status,
            "version": env!("CARGO_PKG_VERSION"),
            "parallel": linkground::par::is_parallel(),
            "kb_fingerprint": e.kb.as_ref().ok().map(|kb| kb.fingerprint().clone()),
            "kb_documents": e.kb.as_ref().map(|kb| kb.document_count()).unwrap_or(0),
            "kb_error": e.kb.as_ref().err(),
            "lm": e.lm_kind,
            "vocab_size": e.tokenizer.vocab_size(),
            "p": e.config.p,
            "sessions": state.sessions.len(),
        })
    };
    match &e.kb {
        Ok(_) => (StatusCode::OK, Json(body("ok"))).into_response(),
        Err(_) => (StatusCode::SERVICE_UNAVAILABLE, Json(body("degraded"))).into_response(),
    }
}

async fn retrieve(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: RetrieveRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let engine = state.engine.clone();
    match tokio::task::spawn_blocking(move || engine.retrieve(&req)).await {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => chat_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    #[serde(default)]
    session_id: Option<String>,
    message: String,
    #[serde(default)]
    speaker_profile: Option<String>,
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ChatRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let limit = state.engine.config.max_message_bytes;
    if req.message.len() > limit {
        return chat_error(ChatError::TooLarge { size: req.message.len(), limit });
    }
    let engine = state.engine.clone();
    let (session, _) = state.sessions.get_or_create(req.session_id.as_deref(), |id| engine.new_session(id));
    let mut guard = session.lock_owned().await;
    let result = tokio::task::spawn_blocking(move || engine.chat(&mut guard, &req.message, req.speaker_profile.as_deref())).await;
    match result {
        Ok(Ok(reply)) => Json(reply).into_response(),
        Ok(Err(e)) => chat_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e),
    }
}
