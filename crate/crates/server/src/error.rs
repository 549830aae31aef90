use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use simrag_core::corpus::CorpusError;
use simrag_core::evalharness::EvalError;
use simrag_core::index::IndexError;
use simrag_core::llm_client::LlmError;
use simrag_core::pipeline::PipelineError;
use simrag_core::refine::RefineError;
use simrag_core::retrieval::RetrievalError;
use simrag_core::session::SessionError;

/// Rendered as `{"error": {"code", "message"}}`.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
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
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let (status, code) = match &e {
            CorpusError::EmptyDocument(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_document"),
            CorpusError::DecodeFailure { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "decode_failure"),
            CorpusError::FileNotFound(_) => (StatusCode::NOT_FOUND, "file_not_found"),
            CorpusError::UnknownCategory(_) => (StatusCode::BAD_REQUEST, "bad_category"),
            CorpusError::UnknownFormat(_) => (StatusCode::BAD_REQUEST, "bad_format"),
            CorpusError::InvalidConfig { .. } => (StatusCode::BAD_REQUEST, "invalid_config"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "corpus_error"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        let (status, code) = match &e {
            IndexError::ProviderUnreachable(_) => (StatusCode::BAD_GATEWAY, "embedder_unreachable"),
            IndexError::InvalidConfig(_) | IndexError::DimensionMismatch { .. } => {
                (StatusCode::BAD_REQUEST, "invalid_config")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "index_error"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Index(e) => e.into(),
            RetrievalError::EmptyPrompt => Self::new(StatusCode::BAD_REQUEST, "empty_prompt", e.to_string()),
            RetrievalError::InvalidConfig(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::UnknownNode(_) => (StatusCode::NOT_FOUND, "unknown_node"),
            SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            SessionError::BudgetImpossible { .. } => (StatusCode::INSUFFICIENT_STORAGE, "budget_impossible"),
            SessionError::EmptyPrompt => (StatusCode::BAD_REQUEST, "empty_prompt"),
            SessionError::InvalidBudget(_) => (StatusCode::BAD_REQUEST, "invalid_config"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "session_error"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let code = match &e {
            LlmError::Unreachable(_) => "provider_unreachable",
            LlmError::Timeout(_) => "provider_timeout",
            LlmError::BadStatus { .. } => "provider_rejected",
            LlmError::MalformedResponse(_) => "provider_malformed",
            LlmError::InvalidRequest(_) => {
                return Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string())
            }
        };
        Self::new(StatusCode::BAD_GATEWAY, code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(e) => e.into(),
            PipelineError::Index(e) => e.into(),
            PipelineError::Retrieval(e) => e.into(),
            PipelineError::Session(e) => e.into(),
            PipelineError::Llm(e) => e.into(),
            PipelineError::EmbedderMismatch { .. } => {
                Self::new(StatusCode::CONFLICT, "embedder_mismatch", e.to_string())
            }
        }
    }
}

impl From<RefineError> for ApiError {
    fn from(e: RefineError) -> Self {
        match e {
            RefineError::Pipeline(e) => e.into(),
            RefineError::EmptyModel => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_model", e.to_string())
            }
            RefineError::InvalidConfig(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ParseFailure { .. }
            | EvalError::DuplicateCaseId(_)
            | EvalError::BadCategoryMapping { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "bad_suite", e.to_string())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}
