//! JSON API over an [`Orchestrator`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use cimdse::error::Error;
use cimdse::orchestrator::{Orchestrator, Session, Turn};
use cimdse::request::AdjustOp;

pub enum ApiError {
    Engine(Error),
    Payload(JsonRejection),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self::Engine(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::Payload(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    op_index: Option<usize>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = match self {
            Self::Engine(e) => e,
            Self::Payload(r) => {
                let body = ErrorBody {
                    error: "payload",
                    message: r.body_text(),
                    op_index: None,
                };
                return (r.status(), Json(body)).into_response();
            }
        };
        let (status, kind) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::State(_) => (StatusCode::CONFLICT, "state"),
            Error::NotReady(_) => (StatusCode::CONFLICT, "not_ready"),
            Error::Adjustment { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "adjustment"),
            Error::Backend(_) => (StatusCode::BAD_GATEWAY, "backend"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
            Error::Evaluation(_) => (StatusCode::INTERNAL_SERVER_ERROR, "evaluation"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
        };
        let op_index = match &e {
            Error::Adjustment { op_index, .. } => Some(*op_index),
            _ => None,
        };
        let body = ErrorBody {
            error: kind,
            message: e.to_string(),
            op_index,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

/// Either structured operations or a free-text adjustment.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum AdjustmentBody {
    Ops { ops: Vec<AdjustOp> },
    Text { text: String },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Exchange {
    pub turn: Turn,
    pub session: Session,
}

type Shared = Arc<Orchestrator>;

/// Runs blocking orchestrator work off the async executor.
async fn blocking<T, F>(orch: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Orchestrator) -> cimdse::error::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&orch))
        .await
        .map_err(|e| ApiError::Engine(Error::State(format!("worker panicked: {e}"))))?
        .map_err(ApiError::Engine)
}

async fn health(State(orch): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "persistent": orch.store().root().is_some(),
    }))
}

async fn create_session(State(orch): State<Shared>) -> ApiResult<(StatusCode, Json<Session>)> {
    let s = blocking(orch, |o| o.create_session()).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn get_session(State(orch): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(blocking(orch, move |o| o.session(&id)).await?))
}

async fn post_message(
    State(orch): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<Json<Exchange>> {
    let Json(body) = body?;
    let ex = blocking(orch, move |o| {
        let turn = o.submit(&id, &body.text)?;
        Ok(Exchange {
            turn,
            session: o.session(&id)?,
        })
    })
    .await?;
    Ok(Json(ex))
}

async fn post_adjustment(
    State(orch): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<AdjustmentBody>, JsonRejection>,
) -> ApiResult<Json<Exchange>> {
    let Json(body) = body?;
    let ex = blocking(orch, move |o| {
        let turn = match body {
            AdjustmentBody::Ops { ops } => o.adjust(&id, &cimdse::request::AdjustmentRequest::new(ops))?,
            AdjustmentBody::Text { text } => o.submit(&id, &text)?,
        };
        Ok(Exchange {
            turn,
            session: o.session(&id)?,
        })
    })
    .await?;
    Ok(Json(ex))
}

async fn confirm(State(orch): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = blocking(orch, move |o| o.confirm(&id)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(orch): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = blocking(orch, move |o| o.job(&id)).await?;
    Ok(Json(job).into_response())
}

async fn get_results(State(orch): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let report = blocking(orch, move |o| o.results(&id)).await?;
    Ok(Json(report).into_response())
}

pub fn router(orch: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/adjustments", post(post_adjustment))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/results", get(get_results))
        .with_state(orch)
}
