use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hygieia_core::domain::DomainError;
use hygieia_core::OrchestratorError;
use serde::Serialize;

use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// JSON error body: `{error, message[, fields][, raw][, outcome_index]}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    /// Unparsable model reply, kept for audit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    /// Index of the persisted failed outcome, when one was recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_index: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            fields: Vec::new(),
            raw: None,
            outcome_index: None,
        }
    }

    pub fn field(mut self, field: impl Into<String>, message: impl Into<String>) -> Self {
        self.fields.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    pub fn bad_json(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidJson", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or invalid bearer token")
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let message = e.to_string();
        match e {
            DomainError::EmptyCase => Self::new(StatusCode::BAD_REQUEST, "EmptyCase", &message)
                .field("phenotypes", "at least one non-blank phenotype is required"),
            DomainError::InvalidField { field, message: m } => {
                Self::new(StatusCode::BAD_REQUEST, "InvalidField", &message).field(field, m)
            }
            DomainError::InvalidConfig { field, message: m } => {
                Self::new(StatusCode::BAD_REQUEST, "InvalidConfig", &message).field(format!("config.{field}"), m)
            }
            _ => Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Duplicate(id) => Self::new(StatusCode::CONFLICT, "DuplicateCase", format!("case {id} already exists"))
                .field("id", "already in use"),
            StoreError::UnknownCase(id) => Self::not_found(format!("case {id} not found")),
            other => {
                tracing::error!(error = %other, "store failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "StoreFailure", other.to_string())
            }
        }
    }
}

impl From<&OrchestratorError> for ApiError {
    fn from(e: &OrchestratorError) -> Self {
        let message = e.to_string();
        let mut err = match e {
            OrchestratorError::InvalidRequest(_) => Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message),
            OrchestratorError::Domain(d) => d.clone().into(),
            _ if e.is_unavailable() => Self::new(StatusCode::SERVICE_UNAVAILABLE, "BackendUnavailable", message),
            OrchestratorError::AnswerParse { .. } => Self::new(StatusCode::BAD_GATEWAY, "AnswerParse", message),
            OrchestratorError::VerdictParse { .. } => Self::new(StatusCode::BAD_GATEWAY, "VerdictParse", message),
            OrchestratorError::MalformedVerdict { section, problem, .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "MalformedVerdict", message).field(section.to_string(), problem.clone())
            }
            OrchestratorError::Gateway(_) | OrchestratorError::Knowledge(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "BackendFailure", message)
            }
            OrchestratorError::Router(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "RouterFailure", message),
        };
        err.raw = e.raw_response().map(str::to_string);
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        let mut resp = (status, Json(self)).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert("www-authenticate", axum::http::HeaderValue::from_static("Bearer"));
        }
        resp
    }
}
