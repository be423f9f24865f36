use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::multipart::MultipartError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use tupli_core::auth::AuthError;
use tupli_core::{FilterError, StoreError};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub detail: String,
}

pub type ApiResult<T> = Result<T, ApiError>;

impl ApiError {
    pub fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    pub fn validation(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "VALIDATION_FAILED", detail)
    }

    pub fn unauthorized(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "UNAUTHORIZED", detail)
    }

    pub fn forbidden(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "FORBIDDEN", detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", detail)
    }

    fn from_status(status: StatusCode, detail: String) -> Self {
        match status {
            StatusCode::PAYLOAD_TOO_LARGE => Self::new(status, "PAYLOAD_TOO_LARGE", detail),
            s if s.is_server_error() => Self::internal(detail),
            _ => Self::new(StatusCode::BAD_REQUEST, "VALIDATION_FAILED", detail),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let detail = e.to_string();
        match e {
            StoreError::Validation(_) | StoreError::InvalidEpisode(_) | StoreError::Filter(_) => {
                Self::validation(detail)
            }
            StoreError::DuplicateBenchmark(_) => {
                Self::new(StatusCode::CONFLICT, "DUPLICATE_BENCHMARK", detail)
            }
            StoreError::DuplicateUser(_) => Self::new(StatusCode::CONFLICT, "DUPLICATE_USER", detail),
            StoreError::NotFound { .. } => Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", detail),
            StoreError::Forbidden(_) => Self::forbidden(detail),
            StoreError::Conflict(_) => Self::new(StatusCode::CONFLICT, "CONFLICT", detail),
            StoreError::Corrupt { .. } | StoreError::Io(_) => {
                tracing::error!(error = %detail, "storage failure");
                Self::internal("storage failure")
            }
        }
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        let detail = e.to_string();
        match e {
            AuthError::InvalidCredentials | AuthError::Unauthenticated | AuthError::Token(_) => {
                Self::unauthorized(detail)
            }
            AuthError::Forbidden(_) => Self::forbidden(detail),
            AuthError::DuplicateUser(_) => Self::new(StatusCode::CONFLICT, "DUPLICATE_USER", detail),
            AuthError::UnknownUser(_) => Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", detail),
            AuthError::InvalidInput(_) => Self::validation(detail),
            AuthError::LastAdmin => Self::new(StatusCode::CONFLICT, "CONFLICT", detail),
            AuthError::Store(s) => s.into(),
        }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        Self::validation(format!("malformed filter: {e}"))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::from_status(r.status(), r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::validation(r.body_text())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        Self::from_status(e.status(), e.body_text())
    }
}
