use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lsvt_core::tracker::BackendError;
use lsvt_core::Error;
use serde_json::{json, Value};

/// JSON error body `{"error": kind, "message": ..., ...}` with a status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn busy() -> Self {
        ApiError::new(StatusCode::CONFLICT, "busy", "another mutation of this session is in progress")
    }

    /// Errors from loading a manifest at session creation are client errors.
    pub fn from_manifest(e: Error) -> Self {
        match e {
            Error::Io { .. }
            | Error::Load { .. }
            | Error::Template { .. }
            | Error::Ordering(_)
            | Error::Format { .. }
            | Error::Argument(_)
            | Error::Dimension(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_manifest", e.to_string()),
            other => other.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::PromptPlacement { point, .. } => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": "prompt_placement", "message": message, "point": point }),
            },
            Error::Initialization(_) | Error::Argument(_) => ApiError::unprocessable(message),
            Error::Precondition(_) => ApiError::new(StatusCode::CONFLICT, "precondition", message),
            Error::Dimension(_) | Error::Pairing(_) => ApiError::new(StatusCode::CONFLICT, "dimension", message),
            Error::Backend { frame, source } => {
                let kind = match source {
                    BackendError::Unavailable(_) => "backend_unavailable",
                    BackendError::Protocol(_) => "backend_protocol",
                    BackendError::Rejected(_) => "backend_rejected",
                };
                ApiError {
                    status: StatusCode::BAD_GATEWAY,
                    body: json!({ "error": kind, "message": message, "halted_at": frame }),
                }
            }
            Error::Format { .. } => ApiError::bad_request(message),
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
