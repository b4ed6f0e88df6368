use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use phydcm_core::diagnose::DiagnoseError;
use serde::Serialize;

/// JSON error body `{error, message}` paired with its HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<DiagnoseError> for ApiError {
    fn from(e: DiagnoseError) -> Self {
        let message = e.to_string();
        match e {
            DiagnoseError::NoModelForScanType(_) => Self::new(StatusCode::CONFLICT, "no_model", message),
            DiagnoseError::Preprocess(_)
            | DiagnoseError::UnknownFormat(_)
            | DiagnoseError::Dicom(_)
            | DiagnoseError::Pgm(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message),
            DiagnoseError::CorruptHistory { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_history", message)
            }
            DiagnoseError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => Self::not_found(message),
            _ => Self::internal(message),
        }
    }
}
