//! The single error envelope of the HTTP API.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use glassflow_core::control::ControlError;
use glassflow_core::graph::{EngineError, GraphError};
use glassflow_core::models::ModelError;
use glassflow_core::payload::PayloadError;
use glassflow_core::xai::{ExplainError, XaiError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Machine-readable error codes; the set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// The request body or query could not be parsed.
    InvalidRequest,
    Unauthorized,
    UnknownRoute,
    UnknownBlock,
    /// The block exists, but its kind has no such endpoint.
    UnsupportedOperation,
    UnknownMethod,
    UnknownRule,
    UnknownRun,
    DuplicateRule,
    InvalidRule,
    InvalidConfig,
    UnknownFeature,
    UnknownLabel,
    SchemaMismatch,
    InvalidParameter,
    ModelError,
    ExplainFailed,
    HandlerFailure,
    AgentUnavailable,
    AgentEndpointUnreachable,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 21] = [
        ErrorCode::InvalidRequest,
        ErrorCode::Unauthorized,
        ErrorCode::UnknownRoute,
        ErrorCode::UnknownBlock,
        ErrorCode::UnsupportedOperation,
        ErrorCode::UnknownMethod,
        ErrorCode::UnknownRule,
        ErrorCode::UnknownRun,
        ErrorCode::DuplicateRule,
        ErrorCode::InvalidRule,
        ErrorCode::InvalidConfig,
        ErrorCode::UnknownFeature,
        ErrorCode::UnknownLabel,
        ErrorCode::SchemaMismatch,
        ErrorCode::InvalidParameter,
        ErrorCode::ModelError,
        ErrorCode::ExplainFailed,
        ErrorCode::HandlerFailure,
        ErrorCode::AgentUnavailable,
        ErrorCode::AgentEndpointUnreachable,
        ErrorCode::Internal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::InvalidRequest => "invalid_request",
            ErrorCode::Unauthorized => "unauthorized",
            ErrorCode::UnknownRoute => "unknown_route",
            ErrorCode::UnknownBlock => "unknown_block",
            ErrorCode::UnsupportedOperation => "unsupported_operation",
            ErrorCode::UnknownMethod => "unknown_method",
            ErrorCode::UnknownRule => "unknown_rule",
            ErrorCode::UnknownRun => "unknown_run",
            ErrorCode::DuplicateRule => "duplicate_rule",
            ErrorCode::InvalidRule => "invalid_rule",
            ErrorCode::InvalidConfig => "invalid_config",
            ErrorCode::UnknownFeature => "unknown_feature",
            ErrorCode::UnknownLabel => "unknown_label",
            ErrorCode::SchemaMismatch => "schema_mismatch",
            ErrorCode::InvalidParameter => "invalid_parameter",
            ErrorCode::ModelError => "model_error",
            ErrorCode::ExplainFailed => "explain_failed",
            ErrorCode::HandlerFailure => "handler_failure",
            ErrorCode::AgentUnavailable => "agent_unavailable",
            ErrorCode::AgentEndpointUnreachable => "agent_endpoint_unreachable",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::UnknownRoute
            | ErrorCode::UnknownBlock
            | ErrorCode::UnsupportedOperation
            | ErrorCode::UnknownMethod
            | ErrorCode::UnknownRule
            | ErrorCode::UnknownRun => StatusCode::NOT_FOUND,
            ErrorCode::DuplicateRule => StatusCode::CONFLICT,
            ErrorCode::InvalidRule
            | ErrorCode::InvalidConfig
            | ErrorCode::UnknownFeature
            | ErrorCode::UnknownLabel
            | ErrorCode::SchemaMismatch
            | ErrorCode::InvalidParameter
            | ErrorCode::ModelError
            | ErrorCode::ExplainFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::HandlerFailure | ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            ErrorCode::AgentUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::AgentEndpointUnreachable => StatusCode::BAD_GATEWAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status: code.status().as_u16(),
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::InvalidRequest, message)
    }

    pub fn unknown_block(id: &str) -> Self {
        ApiError::new(ErrorCode::UnknownBlock, format!("unknown block `{id}`")).with_detail(json!({ "block": id }))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn control_code(e: &ControlError) -> ErrorCode {
    match e {
        ControlError::UnknownFeature(_) => ErrorCode::UnknownFeature,
        ControlError::DuplicateRuleId(_) | ControlError::DuplicatePriority(_) => ErrorCode::DuplicateRule,
        ControlError::UnknownRule(_) => ErrorCode::UnknownRule,
        ControlError::UnknownLabel(_) => ErrorCode::UnknownLabel,
        ControlError::Payload(p) => payload_code(p),
        _ => ErrorCode::InvalidRule,
    }
}

fn payload_code(e: &PayloadError) -> ErrorCode {
    match e {
        PayloadError::UnknownFeature(_) => ErrorCode::UnknownFeature,
        PayloadError::UnknownLabel(_) => ErrorCode::UnknownLabel,
        PayloadError::MissingFeature(_) | PayloadError::SchemaMismatch { .. } | PayloadError::Arity { .. } => {
            ErrorCode::SchemaMismatch
        }
        _ => ErrorCode::InvalidRequest,
    }
}

fn model_code(e: &ModelError) -> ErrorCode {
    match e {
        ModelError::UnknownLabel(_) => ErrorCode::UnknownLabel,
        ModelError::SchemaMismatch(_) => ErrorCode::SchemaMismatch,
        ModelError::InvalidParameter(_) | ModelError::IndexOutOfRange { .. } => ErrorCode::InvalidParameter,
        ModelError::Payload(p) => payload_code(p),
        _ => ErrorCode::ModelError,
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        let code = match &e {
            GraphError::UnknownBlock(id) => return ApiError::unknown_block(id),
            GraphError::WrongKind { .. } | GraphError::KindMismatch { .. } => ErrorCode::UnsupportedOperation,
            GraphError::InvalidConfig { .. } | GraphError::Schema { .. } => ErrorCode::InvalidConfig,
            GraphError::Control(c) => control_code(c),
            GraphError::Model(m) => model_code(m),
            GraphError::Payload(p) => payload_code(p),
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<XaiError> for ApiError {
    fn from(e: XaiError) -> Self {
        let code = match &e {
            XaiError::UnknownFeature(_) => ErrorCode::UnknownFeature,
            XaiError::UnknownClass(_) => ErrorCode::UnknownLabel,
            XaiError::SchemaMismatch(_) => ErrorCode::SchemaMismatch,
            XaiError::InvalidParameter(_) | XaiError::NonFiniteValue(_) | XaiError::TooManyFeatures(_) => {
                ErrorCode::InvalidParameter
            }
            _ => ErrorCode::ExplainFailed,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Graph(g) => g.into(),
            ExplainError::Xai(x) => x.into(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match &e {
            EngineError::InputSchema(p) => ApiError::new(payload_code(p), e.to_string()),
            EngineError::HandlerFailure { block, run_id, .. } => ApiError::new(ErrorCode::HandlerFailure, e.to_string())
                .with_detail(json!({ "block": block, "trace_ref": run_id })),
        }
    }
}

impl From<PayloadError> for ApiError {
    fn from(e: PayloadError) -> Self {
        ApiError::new(payload_code(&e), e.to_string())
    }
}
