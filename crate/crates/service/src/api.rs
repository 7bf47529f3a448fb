//! HTTP routes. Every body is JSON, errors included:
//! `{"error": code, "message": text}` plus a `report` for rule violations.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{to_bytes, Bytes};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::model::{CandidateRequest, ContactResponse, Submission, SubmitOutcome};
use crate::store::Store;

const MAX_BODY: usize = 16 * 1024 * 1024;

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let status = match &e {
            ServiceError::Core(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Stage1Incomplete(_)
            | ServiceError::DuplicateResponse { .. }
            | ServiceError::TaskClosed(_) => StatusCode::CONFLICT,
            ServiceError::InconsistentPartial(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::ConfigMismatch(_) | ServiceError::CorruptLog { .. } | ServiceError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let mut body = json!({"error": e.code(), "message": e.to_string()});
        if let ServiceError::InconsistentPartial(report) = &e {
            body["report"] = json!(report);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct WorkerQuery {
    worker: Option<String>,
}

impl WorkerQuery {
    fn worker(self) -> Result<String, ServiceError> {
        self.worker
            .filter(|w| !w.trim().is_empty())
            .ok_or_else(|| ServiceError::BadRequest("missing worker query parameter".into()))
    }
}

#[derive(Deserialize)]
struct VideoQuery {
    video: Option<String>,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/tasks/contact/next", get(next_contact))
        .route("/tasks/contact/{id}", get(contact_consensus))
        .route("/tasks/contact/{id}/response", post(contact_response))
        .route("/tasks/therblig/next", get(next_therblig))
        .route("/tasks/therblig/{id}", get(open_therblig))
        .route("/tasks/therblig/{id}/candidates", post(candidates))
        .route("/tasks/therblig/{id}/submit", post(submit))
        .route("/export", get(export))
        .with_state(store)
}

/// Accepts `multipart/form-data` (first file part) or a raw CSV body.
async fn ingest(State(store): State<Arc<Store>>, req: Request) -> ApiResult<Response> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let csv = if multipart {
        let bad = |e: &dyn std::fmt::Display| ServiceError::BadRequest(format!("multipart body: {e}"));
        let mut form = Multipart::from_request(req, &()).await.map_err(|e| bad(&e))?;
        let field = form
            .next_field()
            .await
            .map_err(|e| bad(&e))?
            .ok_or_else(|| ServiceError::BadRequest("multipart body has no parts".into()))?;
        field.bytes().await.map_err(|e| bad(&e))?
    } else {
        to_bytes(req.into_body(), MAX_BODY)
            .await
            .map_err(|e| ServiceError::BadRequest(format!("unreadable body: {e}")))?
    };
    Ok(Json(store.ingest_csv(csv.as_ref())?).into_response())
}

async fn next_contact(State(store): State<Arc<Store>>, Query(q): Query<WorkerQuery>) -> ApiResult<Response> {
    let worker = q.worker()?;
    Ok(match store.next_contact_task(&worker) {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn contact_consensus(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.contact_consensus(&id)?).into_response())
}

async fn contact_response(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let response: ContactResponse = parse(&body)?;
    Ok(Json(store.submit_contact_response(&id, response)?).into_response())
}

async fn next_therblig(State(store): State<Arc<Store>>, Query(q): Query<WorkerQuery>) -> ApiResult<Response> {
    q.worker()?;
    Ok(match store.next_therblig_task() {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn open_therblig(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.open_therblig_task(&id)?).into_response())
}

async fn candidates(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: CandidateRequest = if body.is_empty() { CandidateRequest::default() } else { parse(&body)? };
    Ok(Json(store.next_candidates(&id, &req)?).into_response())
}

async fn submit(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let sub: Submission = parse(&body)?;
    let outcome = store.submit_annotation(&id, sub)?;
    let status = match outcome {
        SubmitOutcome::Accepted { .. } => StatusCode::OK,
        SubmitOutcome::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
    };
    Ok((status, Json(outcome)).into_response())
}

async fn export(State(store): State<Arc<Store>>, Query(q): Query<VideoQuery>) -> ApiResult<Response> {
    let records = store.export(q.video.as_deref());
    let mut out = Vec::new();
    therblig_core::record::write_jsonl(&mut out, &records)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

/// Serves the API until Ctrl-C.
pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
