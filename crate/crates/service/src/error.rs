use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ceph_core::image_io::ImageError;
use ceph_core::pipeline::PipelineError;
use serde_json::json;

use crate::store::StoreError;

/// An HTTP error with a stable machine-readable `error` kind.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn case_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "CaseNotFound", format!("no case {id}"))
    }

    pub fn not_decoded() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "NotDecoded",
            "case has not been decoded yet",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.kind, self.message);
        }
        let body = json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

impl From<ImageError> for ApiError {
    fn from(e: ImageError) -> Self {
        let status = match e {
            ImageError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Image(e) => e.into(),
            PipelineError::Inference(e) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "BackendUnavailable", e.to_string())
            }
            other => Self::internal(other.to_string()),
        }
    }
}
