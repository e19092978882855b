use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ods_core::check::CheckError;
use ods_core::diag::render_text;
use ods_core::rebac::ModelError;
use ods_core::store::StoreError;
use serde_json::json;

/// An error response: `{"code": ..., "message": ...}` with a status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_error", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::DuplicateAdd(_) | StoreError::AbsentDelete(_) => {
                Self::new(StatusCode::CONFLICT, "write_conflict", message)
            }
            StoreError::UnknownTypeOrRelation(_) | StoreError::NoModel | StoreError::UnknownModel(_) => {
                Self::not_found(message)
            }
            StoreError::InvalidTuple { .. } | StoreError::EmptyWrite => Self::bad_request(message),
            StoreError::InvalidModel(d) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_authorization_model",
                render_text(&d),
            ),
            StoreError::StoreBusy(_) => Self::new(StatusCode::SERVICE_UNAVAILABLE, "store_busy", message),
            StoreError::Corrupt(_) | StoreError::Poisoned | StoreError::Io(_) => Self::internal(message),
        }
    }
}

impl From<CheckError> for ApiError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::UnknownTypeOrRelation(_) => Self::not_found(e.to_string()),
            CheckError::MalformedContext(_) | CheckError::InvalidContextualTuple { .. } => {
                Self::bad_request(e.to_string())
            }
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MalformedDocument(m) => Self::bad_request(m),
            ModelError::InvalidModel(d) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_authorization_model",
                render_text(&d),
            ),
        }
    }
}
