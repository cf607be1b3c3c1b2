//! Uniform error envelope shared by the HTTP API and the job runner.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use oasis_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// `{code, message, detail}` with the HTTP status it maps to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip, default = "internal")]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

fn internal() -> StatusCode {
    StatusCode::INTERNAL_SERVER_ERROR
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            detail,
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        let what = what.into();
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("not found: {what}"),
            json!({ "resource": what }),
        )
    }

    pub fn bad_request(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_param", message, json!({ "field": field }))
    }

    pub fn write_conflict(resource: &str, job_id: &str) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "write_conflict",
            format!("`{resource}` is being written by job {job_id}"),
            json!({ "resource": resource, "job_id": job_id }),
        )
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, code, detail) = match &e {
            Error::UnknownCorpus(name) => (StatusCode::NOT_FOUND, "not_found", json!({ "corpus": name })),
            Error::NotFound(what) => (StatusCode::NOT_FOUND, "not_found", json!({ "resource": what })),
            Error::NameTaken(name) => (StatusCode::CONFLICT, "name_taken", json!({ "name": name })),
            Error::LineageCycle(name) => (StatusCode::CONFLICT, "lineage_cycle", json!({ "name": name })),
            Error::InvalidParam { field, .. } => (StatusCode::BAD_REQUEST, "invalid_param", json!({ "field": field })),
            Error::Json(err) => (
                StatusCode::BAD_REQUEST,
                "invalid_json",
                json!({ "line": err.line(), "column": err.column() }),
            ),
            Error::Precondition(_) => (StatusCode::UNPROCESSABLE_ENTITY, "precondition", Value::Null),
            Error::ModelFormat(_) => (StatusCode::UNPROCESSABLE_ENTITY, "model_format", Value::Null),
            Error::Cancelled => (StatusCode::CONFLICT, "cancelled", Value::Null),
            Error::Transport(_) => (StatusCode::BAD_GATEWAY, "transport", Value::Null),
            Error::Io { path, .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io", json!({ "path": path })),
        };
        ApiError::new(status, code, message, detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

/// Deserializes `value`, reporting the path of the offending field.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(schema_error)
}

/// Deserializes a JSON body, reporting the path of the offending field.
pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(schema_error)
}

fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> ApiError {
    let mut path = e.path().to_string();
    let inner = e.into_inner();
    // serde reports a missing field at its parent; point at the field itself
    let msg = inner.to_string();
    if let Some(field) = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
        path = if path == "." {
            field.to_string()
        } else {
            format!("{path}.{field}")
        };
    }
    ApiError::new(
        StatusCode::BAD_REQUEST,
        "schema",
        format!("invalid config at `{path}`: {inner}"),
        json!({ "path": path }),
    )
}

pub type ApiResult<T> = Result<T, ApiError>;
