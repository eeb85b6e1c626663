//! JSON over HTTP. Errors are `{code, message}` with a matching status.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use synthelite_core::RouteCandidate;

use crate::error::ServiceError;
use crate::job::Job;
use crate::runner::JobRequest;
use crate::service::JobService;

type Shared = State<Arc<JobService>>;

pub fn router(svc: Arc<JobService>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/jobs", post(submit).get(list))
        .route("/api/jobs/{id}", get(job))
        .route("/api/jobs/{id}/routes", get(routes))
        .route("/api/jobs/{id}/feedback", post(feedback))
        .with_state(svc)
}

fn body<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(bytes).map_err(|e| ServiceError::Validation(format!("request body: {e}")))
}

async fn health(State(svc): Shared) -> Json<Value> {
    let engine = svc.engine();
    Json(json!({
        "status": "ok",
        "templates": engine.index.len(),
        "stock": engine.stock.len(),
        "backend": engine.backend.name(),
        "busy": svc.busy(),
    }))
}

#[derive(Serialize)]
struct Submitted {
    id: String,
    status: crate::job::JobStatus,
}

async fn submit(State(svc): Shared, bytes: Bytes) -> Result<(StatusCode, Json<Submitted>), ServiceError> {
    let req: JobRequest = body(&bytes)?;
    let (job, created) = svc.submit(req)?;
    let code = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((code, Json(Submitted { id: job.id, status: job.status })))
}

async fn list(State(svc): Shared) -> Result<Json<Vec<Job>>, ServiceError> {
    Ok(Json(svc.list()?))
}

async fn job(State(svc): Shared, Path(id): Path<String>) -> Result<Json<Job>, ServiceError> {
    Ok(Json(svc.get(&id)?))
}

#[derive(Deserialize)]
struct RoutesQuery {
    k: Option<String>,
}

async fn routes(
    State(svc): Shared,
    Path(id): Path<String>,
    Query(q): Query<RoutesQuery>,
) -> Result<Json<Vec<RouteCandidate>>, ServiceError> {
    let k = match q.k.as_deref() {
        None => None,
        Some(s) => Some(
            s.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| ServiceError::Validation(format!("k must be a positive integer, got {s:?}")))?,
        ),
    };
    Ok(Json(svc.routes(&id, k)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackBody {
    #[serde(default)]
    text: String,
}

async fn feedback(State(svc): Shared, Path(id): Path<String>, bytes: Bytes) -> Result<Json<Submitted>, ServiceError> {
    let fb: FeedbackBody = body(&bytes)?;
    let job = svc.add_feedback(&id, &fb.text)?;
    Ok(Json(Submitted { id: job.id, status: job.status }))
}
