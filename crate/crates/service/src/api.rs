use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::record::Status;
use crate::state::{parse_task, Service, ServiceError};

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::UnknownTask(_) | ServiceError::NotFound => StatusCode::NOT_FOUND,
            ServiceError::QuotaExceeded { .. } => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::Storage(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::UnknownTask(_) => "UnknownTask",
            ServiceError::NotFound => "NotFound",
            ServiceError::QuotaExceeded { .. } => "QuotaExceeded",
            ServiceError::Storage(_) | ServiceError::Internal(_) => "Internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut response = (self.status(), Json(json!({ "error": self.code(), "detail": self.to_string() }))).into_response();
        if let ServiceError::QuotaExceeded { resets_at, .. } = &self {
            let wait = (*resets_at - chrono::Utc::now()).num_seconds().max(1);
            if let Ok(v) = HeaderValue::from_str(&wait.to_string()) {
                response.headers_mut().insert(header::RETRY_AFTER, v);
            }
        }
        if let ServiceError::Unauthorized = self {
            response.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        response
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

fn team(service: &Service, headers: &HeaderMap) -> Result<String, ServiceError> {
    bearer(headers).and_then(|t| service.authenticate(t)).map(str::to_string).ok_or(ServiceError::Unauthorized)
}

async fn submit(
    State(service): State<Arc<Service>>,
    Path(task): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let team = team(&service, &headers)?;
    let task = parse_task(&task)?;
    let record = service.submit(&team, task, body.to_vec()).await?;
    let status = if record.status == Status::Rejected { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::CREATED };
    let remaining = service.remaining(&team, task);
    let mut response = (status, Json(record)).into_response();
    response.headers_mut().insert("x-quota-remaining", HeaderValue::from(remaining));
    Ok(response)
}

async fn get_submission(
    State(service): State<Arc<Service>>,
    Path((task, id)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let team = team(&service, &headers)?;
    let task = parse_task(&task)?;
    Ok(Json(service.get(&team, task, &id)?).into_response())
}

async fn leaderboard(State(service): State<Arc<Service>>, Path(task): Path<String>) -> Result<Response, ServiceError> {
    let task = parse_task(&task)?;
    Ok(Json(service.leaderboard(task)?).into_response())
}

async fn health(State(service): State<Arc<Service>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "schema_version": evalkit::SCHEMA_VERSION,
        "records": service.records().len(),
    }))
}

pub fn router(service: Arc<Service>) -> Router {
    let limit = service.config().max_upload_bytes;
    Router::new()
        .route("/api/v1/tasks/{task}/submissions", post(submit))
        .route("/api/v1/tasks/{task}/submissions/{id}", get(get_submission))
        .route("/api/v1/tasks/{task}/leaderboard", get(leaderboard))
        .route("/api/v1/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(service)
}
