use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("document id {0:?} is already registered")]
    DocumentExists(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("{0}")]
    WrongTriggerMode(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "malformed_request",
            ApiError::UnknownDocument(_) => "unknown_document",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::DocumentExists(_) => "document_exists",
            ApiError::InvalidDocument(_) => "invalid_document",
            ApiError::WrongTriggerMode(_) => "wrong_trigger_mode",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) | ApiError::InvalidDocument(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownDocument(_) | ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::DocumentExists(_) | ApiError::WrongTriggerMode(_) => StatusCode::CONFLICT,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.code(), "message": self.to_string() }));
        (self.status(), body).into_response()
    }
}
