use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tplrag_core::catalog::CatalogError;
use tplrag_core::dialogue::{AgentAction, DialogueError, SlotSchema};
use tplrag_core::{Conversation, Reply};

use crate::state::{AppState, StateError};

pub type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/templates", get(list_templates))
        .route("/v1/templates/{id}", get(get_template))
        .route("/v1/admin/ingest", post(admin_ingest))
        .route("/v1/metrics", get(metrics))
        .with_state(state)
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn err(status: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(status, msg.into())
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let status = match &e {
            DialogueError::EmptyMessage | DialogueError::InvalidSchema(_) => StatusCode::BAD_REQUEST,
            DialogueError::SessionFinished | DialogueError::NotRecommending => StatusCode::CONFLICT,
            DialogueError::Adapter(_) => StatusCode::BAD_GATEWAY,
            DialogueError::InvalidEvent(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        err(status, e.to_string())
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| err(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

/// `{type: "question", slot, text}` or
/// `{type: "recommendation", text, forced, recommendation, error, metrics}`.
fn action_json(state: &AppState, id: &str, reply: &Reply, conv: &Conversation) -> Value {
    match &reply.action {
        AgentAction::AskQuestion { slot, text } => json!({
            "type": "question",
            "slot": slot,
            "text": text,
        }),
        AgentAction::Recommend { forced } => json!({
            "type": "recommendation",
            "text": reply.agent_text,
            "forced": forced,
            "recommendation": reply.recommendation,
            "error": reply.retrieval_error,
            "metrics": state.metrics(id, conv),
        }),
    }
}

async fn healthz(State(state): State<Shared>) -> Json<Value> {
    let loaded = state.loaded.load();
    Json(json!({
        "status": "ok",
        "ready": loaded.is_some(),
        "templates": loaded.as_ref().map(|l| l.catalog.len()).unwrap_or(0),
    }))
}

#[derive(Deserialize)]
struct CreateBody {
    message: String,
    #[serde(default)]
    schema: Option<SlotSchema>,
}

#[derive(Deserialize)]
struct MessageBody {
    message: String,
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let body: CreateBody = parse_body(&body)?;
    if body.message.trim().is_empty() {
        return Err(err(StatusCode::BAD_REQUEST, "message must not be empty"));
    }
    let loaded = state
        .loaded
        .load_full()
        .ok_or_else(|| err(StatusCode::SERVICE_UNAVAILABLE, "no catalog has been ingested yet"))?;
    let clock = state.clock.clone();
    let (conv, reply) = tokio::task::spawn_blocking(move || {
        loaded.engine.start(body.schema, &body.message, clock.as_ref())
    })
    .await
    .map_err(internal)??;
    let id = uuid::Uuid::new_v4().to_string();
    state.record(&id, &reply.events).map_err(internal)?;
    let action = action_json(&state, &id, &reply, &conv);
    state.insert_session(id.clone(), conv);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "action": action })),
    )
        .into_response())
}

async fn post_message(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let slot = state
        .session(&id)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))?;
    let body: MessageBody = parse_body(&body)?;
    let mut guard = slot
        .conv
        .clone()
        .try_lock_owned()
        .map_err(|_| err(StatusCode::CONFLICT, "a message for this session is already in flight"))?;
    if guard.session.is_finished() {
        return Err(err(StatusCode::CONFLICT, "session is finished"));
    }
    let loaded = state
        .loaded
        .load_full()
        .ok_or_else(|| err(StatusCode::SERVICE_UNAVAILABLE, "no catalog has been ingested yet"))?;
    let clock = state.clock.clone();
    let (guard, reply) = tokio::task::spawn_blocking(move || {
        let r = loaded.engine.respond(&mut guard, &body.message, clock.as_ref());
        (guard, r)
    })
    .await
    .map_err(internal)?;
    let reply = reply?;
    state.record(&id, &reply.events).map_err(internal)?;
    slot.view.store(Arc::new(guard.clone()));
    Ok(Json(json!({ "action": action_json(&state, &id, &reply, &guard) })))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = state
        .session(&id)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))?;
    let conv = slot.view.load_full();
    let s = &conv.session;
    let slots: Vec<Value> = s
        .slots()
        .ordered(s.schema())
        .map(|(name, status)| {
            let mut v = serde_json::to_value(status).unwrap_or(Value::Null);
            v["name"] = json!(name);
            v
        })
        .collect();
    Ok(Json(json!({
        "session_id": id,
        "phase": s.phase(),
        "questions_asked": s.questions_asked(),
        "slots": slots,
        "transcript": s.transcript().turns(),
        "usage": s.usage(),
        "metrics": state.metrics(&id, &conv),
        "recommendation": conv.recommendation,
        "retrieval_error": conv.retrieval_error,
    })))
}

async fn list_templates(State(state): State<Shared>) -> Json<Value> {
    let loaded = state.loaded.load();
    let rows: Vec<Value> = loaded
        .as_ref()
        .map(|l| {
            l.catalog
                .templates()
                .iter()
                .map(|t| {
                    json!({
                        "id": t.id,
                        "title": t.title,
                        "description": t.description,
                        "tags": t.tags,
                        "facets": t.facets,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Json(Value::Array(rows))
}

async fn get_template(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let loaded = state.loaded.load();
    let t = loaded
        .as_ref()
        .and_then(|l| l.catalog.get(&id).cloned())
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown template `{id}`")))?;
    Ok(Json(serde_json::to_value(t).map_err(internal)?))
}

#[derive(Deserialize)]
struct IngestBody {
    dir: PathBuf,
}

async fn admin_ingest(State(state): State<Shared>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let body: IngestBody = parse_body(&body)?;
    let bad = |m: String| err(StatusCode::BAD_REQUEST, m);
    let dir = body
        .dir
        .canonicalize()
        .map_err(|e| bad(format!("{}: {e}", body.dir.display())))?;
    if !dir.is_dir() {
        return Err(bad(format!("{} is not a directory", dir.display())));
    }
    if let Some(root) = &state.config.ingest_root {
        let root = root.canonicalize().map_err(internal)?;
        if !dir.starts_with(&root) {
            return Err(bad(format!("{} is outside the allowed ingest root", dir.display())));
        }
    }
    let st = state.clone();
    let report = tokio::task::spawn_blocking(move || st.ingest(&dir))
        .await
        .map_err(internal)?
        .map_err(|e| match e {
            StateError::Catalog(CatalogError::EmptyCatalog(_)) => {
                err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
            }
            StateError::Catalog(_) => err(StatusCode::BAD_REQUEST, e.to_string()),
            StateError::Embedding(_) => err(StatusCode::BAD_GATEWAY, e.to_string()),
            other => internal(other),
        })?;
    Ok(Json(json!({
        "accepted": report.accepted.len(),
        "rejected": report.rejected.len(),
        "rejections": report.rejected,
        "templates": report.accepted,
    })))
}

async fn metrics(State(state): State<Shared>) -> Json<Value> {
    let rows: Vec<Value> = state
        .sessions()
        .iter()
        .map(|(id, slot)| json!(state.metrics(id, &slot.view.load())))
        .collect();
    Json(Value::Array(rows))
}
