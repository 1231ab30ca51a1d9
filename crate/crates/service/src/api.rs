//! HTTP API.
//!
//! | method | path                       | body / query                         |
//! |--------|----------------------------|--------------------------------------|
//! | POST   | `/runs`                    | [`CreateRun`] → 202 + run record     |
//! | GET    | `/runs/{id}`               | run record                           |
//! | GET    | `/runs/{id}/results`       | `view`, `source`, `offset`, `limit`  |
//! | GET    | `/runs/{id}/queries`       | query document                       |
//! | PUT    | `/runs/{id}/queries`       | query document; resumes a held run   |
//! | POST   | `/runs/{id}/labels`        | [`LabelRequest`] → 201 + label       |
//! | GET    | `/runs/{id}/export`        | `format` = jsonl, csv or dataset     |
//!
//! Errors are `{"error": message}` with 400, 404, 409 or 500.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use greylit_core::planner::{export_queries, import_queries};
use serde::Deserialize;

use crate::export::ExportFormat;
use crate::pipeline::{CreateRun, LabelRequest, ResultsQuery, Service, ServiceError};

pub struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Invalid(_) | ServiceError::Format(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/results", get(get_results))
        .route("/runs/{id}/queries", get(get_queries).put(put_queries))
        .route("/runs/{id}/labels", post(post_label))
        .route("/runs/{id}/export", get(export))
        .with_state(service)
}

/// Runs blocking pipeline work off the async executor. Failures are
/// already recorded on the run, so the outcome is only logged.
fn spawn_stage(
    service: Arc<Service>,
    run_id: String,
    stage: fn(&Service, &str) -> Result<crate::types::RunRecord, ServiceError>,
) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = stage(&service, &run_id) {
            tracing::error!(run = %run_id, error = %e, "pipeline stage failed");
        }
    });
}

async fn create_run(
    State(svc): State<Arc<Service>>,
    body: Result<Json<CreateRun>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let run = svc.create_run(&req)?;
    spawn_stage(svc, run.run_id.clone(), Service::run_pipeline);
    Ok((StatusCode::ACCEPTED, Json(run)))
}

async fn get_run(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.get_run(&id)?))
}

async fn get_results(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<ResultsQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = q?;
    Ok(Json(svc.get_results(&id, &q)?))
}

async fn get_queries(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let bundle = svc.get_queries(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], export_queries(&bundle)))
}

async fn put_queries(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let bundle = import_queries(&body).map_err(|e| ServiceError::Invalid(e.to_string()))?;
    let run = svc.replace_queries(&id, bundle)?;
    if run.hold_for_review {
        spawn_stage(svc, id, Service::execute);
    }
    Ok(Json(run))
}

async fn post_label(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok((StatusCode::CREATED, Json(svc.submit_label(&id, &req)?)))
}

#[derive(Deserialize)]
struct ExportParams {
    #[serde(default = "default_format")]
    format: String,
}

fn default_format() -> String {
    "jsonl".into()
}

async fn export(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<ExportParams>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(p) = q?;
    let format: ExportFormat = p.format.parse()?;
    let body = svc.export_run(&id, &p.format)?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], body))
}

/// Serves the API until ctrl-c.
pub async fn serve(service: Arc<Service>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
