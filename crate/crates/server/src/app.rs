//! Router, shared state and request handlers.

use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use simrag_core::config::SimragConfig;
use simrag_core::corpus::{detect_format, ingest_document, DocFormat, SourceCategory};
use simrag_core::evalharness::{load_suite, run_suite, EvalCase, EvalReport, RunOptions};
use simrag_core::llm_client::list_models;
use simrag_core::pipeline::{ingest_into, save_snapshot, IngestSummary, Pipeline, PipelineError};
use simrag_core::refine::{refine_loop, RefineOutcome};
use simrag_core::retrieval::{Citation, RetrievalConfig};
use simrag_core::session::{ChatMessage, SessionTree};

use crate::error::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("data_dir {path} is not usable: {source}")]
    DataDir { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub struct AppState {
    config: SimragConfig,
    /// Read snapshot; ingestion builds a new pipeline and swaps it in.
    pipeline: RwLock<Arc<Pipeline>>,
    ingest: tokio::sync::Mutex<()>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Check that `data_dir` is writable and load any stored corpus and index.
    pub fn open(config: SimragConfig) -> Result<Self, StartupError> {
        let dir = config.data_dir.clone();
        let probe = dir.join(".write-probe");
        std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(&probe, b""))
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|source| StartupError::DataDir {
                path: dir.clone(),
                source,
            })?;
        let pipeline = Pipeline::load(config.pipeline(), &dir)?;
        Ok(Self {
            config,
            pipeline: RwLock::new(Arc::new(pipeline)),
            ingest: tokio::sync::Mutex::new(()),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SimragConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<Pipeline> {
        Arc::clone(&self.pipeline.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// The ingest write lock, if no ingest is running.
    pub fn try_begin_ingest(&self) -> Option<tokio::sync::MutexGuard<'_, ()>> {
        self.ingest.try_lock().ok()
    }

    fn install(&self, pipeline: Pipeline) {
        *self.pipeline.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(pipeline);
    }

    fn sessions_dir(&self) -> PathBuf {
        self.config.data_dir.join("sessions")
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.session_locks.lock().unwrap_or_else(|e| e.into_inner());
        Arc::clone(locks.entry(id.to_string()).or_default())
    }
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .route("/api/ingest", post(ingest))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/branch", post(branch_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/chunks/{chunk_id}", get(get_chunk))
        .route("/api/eval/run", post(run_eval))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed",
            )
        })
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}".as_slice()
    } else {
        body
    };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn check_session_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("unknown session {id}"),
        ))
    }
}

async fn health(State(state): State<SharedState>) -> Json<Value> {
    let p = state.snapshot();
    Json(json!({
        "status": "ok",
        "index_size": p.index.len(),
        "document_count": p.corpus.documents().count(),
        "provider_kind": p.config.provider.kind,
        "model": p.config.model,
    }))
}

async fn models(State(state): State<SharedState>) -> Result<Json<Value>, ApiError> {
    let provider = state.config.provider.clone();
    let models = blocking(move || Ok(list_models(&provider)?)).await?;
    Ok(Json(json!({ "models": models })))
}

#[derive(Deserialize)]
struct IngestRequest {
    path: PathBuf,
    category: String,
    #[serde(default)]
    format: Option<String>,
}

async fn ingest(State(state): State<SharedState>, body: Bytes) -> Result<Json<IngestSummary>, ApiError> {
    let req: IngestRequest = parse_body(&body)?;
    let category: SourceCategory = req.category.parse()?;
    let format = req.format.as_deref().map(str::parse::<DocFormat>).transpose()?;
    if req.path.is_dir() {
        return Err(ApiError::bad_request(
            "path is a directory; ingest files one at a time",
        ));
    }
    let Some(_guard) = state.try_begin_ingest() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "ingest_in_progress",
            "another ingest is running",
        ));
    };
    let worker = Arc::clone(&state);
    let summary = blocking(move || {
        let format = format.unwrap_or_else(|| detect_format(&req.path));
        let doc = ingest_document(&req.path, category, format)?;
        let current = worker.snapshot();
        let mut corpus = (*current.corpus).clone();
        let mut index = (*current.index).clone();
        let summary = ingest_into(&mut corpus, &mut index, &doc, &current.config.embedder)?;
        save_snapshot(&corpus, &index, &worker.config.data_dir)?;
        worker.install(Pipeline::new(
            current.config.clone(),
            Arc::new(corpus),
            Arc::new(index),
        ));
        Ok(summary)
    })
    .await?;
    tracing::info!(doc_id = %summary.doc_id, chunks = summary.chunk_count, "ingested");
    Ok(Json(summary))
}

async fn create_session(State(state): State<SharedState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let _: Value = parse_body(&body)?;
    let tree = state.snapshot().new_session();
    let dir = state.sessions_dir();
    let tree = blocking(move || {
        tree.save(&dir)?;
        Ok(tree)
    })
    .await?;
    Ok(Json(json!({
        "session_id": tree.session_id,
        "root": tree.root,
        "active_leaf": tree.active_leaf,
    })))
}

async fn get_session(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<SessionTree>, ApiError> {
    check_session_id(&id)?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let dir = state.sessions_dir();
    Ok(Json(blocking(move || Ok(SessionTree::load(&dir, &id)?)).await?))
}

#[derive(Deserialize)]
struct BranchRequest {
    node_id: String,
}

async fn branch_session(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    check_session_id(&id)?;
    let req: BranchRequest = parse_body(&body)?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let dir = state.sessions_dir();
    let leaf = blocking(move || {
        let mut tree = SessionTree::load(&dir, &id)?;
        tree.branch(&req.node_id)?;
        tree.save(&dir)?;
        Ok(tree.active_leaf)
    })
    .await?;
    Ok(Json(json!({ "active_leaf": leaf })))
}

#[derive(Deserialize)]
struct MessageRequest {
    prompt: String,
    #[serde(default)]
    retrieval_overrides: Option<Value>,
    #[serde(default)]
    refine: Option<RefineRequest>,
}

#[derive(Deserialize)]
struct RefineRequest {
    #[serde(default)]
    enabled: bool,
    #[serde(default)]
    max_iterations: Option<usize>,
}

#[derive(Serialize)]
struct MessageResponse {
    session_id: String,
    assistant_message: ChatMessage,
    citations: Vec<Citation>,
    active_leaf: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    refine_outcome: Option<RefineOutcome>,
}

/// Shallow-merge `overrides` onto `base`.
pub fn merge_retrieval(
    base: &RetrievalConfig,
    overrides: Option<Value>,
) -> Result<RetrievalConfig, ApiError> {
    let Some(overrides) = overrides else {
        return Ok(base.clone());
    };
    let Value::Object(overrides) = overrides else {
        return Err(ApiError::bad_request("retrieval_overrides must be an object"));
    };
    let mut merged = serde_json::to_value(base).map_err(|e| ApiError::internal(e.to_string()))?;
    if let Value::Object(fields) = &mut merged {
        fields.extend(overrides);
    }
    let config: RetrievalConfig = serde_json::from_value(merged)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
    config.validate()?;
    Ok(config)
}

async fn post_message(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<MessageResponse>, ApiError> {
    check_session_id(&id)?;
    let req: MessageRequest = parse_body(&body)?;
    let pipeline = state.snapshot();
    let retrieval = merge_retrieval(&pipeline.config.retrieval, req.retrieval_overrides)?;
    let refine = match req.refine.filter(|r| r.enabled) {
        None => None,
        Some(r) => {
            let validator = state.config.validator.clone().ok_or_else(|| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "no_validator",
                    "refinement needs a [validator] section in the config",
                )
            })?;
            let max = r.max_iterations.unwrap_or(state.config.refine.max_iterations);
            if max == 0 {
                return Err(ApiError::bad_request("refine.max_iterations must be positive"));
            }
            Some((validator, max))
        }
    };

    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let dir = state.sessions_dir();
    let response = blocking(move || {
        let stored = SessionTree::load(&dir, &id)?;
        // Work on a copy so a failure anywhere leaves the stored tree as it was.
        let mut tree = stored.clone();
        let answer = pipeline.chat(&mut tree, &req.prompt, Some(&retrieval))?;
        let assistant_id = tree.active_leaf.clone();
        let refine_outcome = match refine {
            Some((validator, max)) => Some(refine_loop(
                pipeline.as_ref(),
                &mut tree,
                &answer.response.content,
                &validator,
                max,
            )?),
            None => None,
        };
        tree.save(&dir)?;
        let assistant_message = tree
            .get(&assistant_id)
            .map(|n| n.message.clone())
            .ok_or_else(|| ApiError::internal("assistant message vanished"))?;
        Ok(MessageResponse {
            session_id: tree.session_id.clone(),
            assistant_message,
            citations: answer.citations,
            active_leaf: tree.active_leaf.clone(),
            refine_outcome,
        })
    })
    .await?;
    Ok(Json(response))
}

async fn get_chunk(
    State(state): State<SharedState>,
    Path(chunk_id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let p = state.snapshot();
    let chunk = p.corpus.chunk(&chunk_id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_chunk",
            format!("unknown chunk {chunk_id}"),
        )
    })?;
    let doc = p.corpus.document(&chunk.doc_id);
    Ok(Json(json!({
        "chunk_id": chunk.id,
        "doc_id": chunk.doc_id,
        "doc_path": doc.map(|d| d.source_path.as_str()),
        "category": doc.map(|d| d.category),
        "ordinal": chunk.ordinal,
        "text": chunk.text,
        "word_count": chunk.word_count,
        "prev": chunk.prev,
        "next": chunk.next,
    })))
}

#[derive(Deserialize)]
struct EvalRequest {
    #[serde(default)]
    suite: Option<PathBuf>,
    #[serde(default)]
    cases: Option<Vec<EvalCase>>,
    #[serde(default)]
    chained: bool,
}

fn resolve_suite(req: &mut EvalRequest) -> Result<Vec<EvalCase>, ApiError> {
    match (req.suite.take(), req.cases.take()) {
        (Some(path), None) => Ok(load_suite(FsPath::new(&path))?),
        (None, Some(cases)) => {
            let json = serde_json::to_string(&cases).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(simrag_core::evalharness::parse_suite(
                &json,
                FsPath::new("."),
                "request",
            )?)
        }
        _ => Err(ApiError::bad_request(
            "give exactly one of `suite` (path) or `cases`",
        )),
    }
}

async fn run_eval(State(state): State<SharedState>, body: Bytes) -> Result<Json<EvalReport>, ApiError> {
    let mut req: EvalRequest = parse_body(&body)?;
    if state.try_begin_ingest().is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "ingest_in_progress",
            "an ingest holds the write lock; retry shortly",
        ));
    }
    let cases = resolve_suite(&mut req)?;
    let limit = state.config.eval.row_limit;
    if cases.len() > limit {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "row_limit",
            format!("suite has {} cases, limit is {limit}", cases.len()),
        ));
    }
    let pipeline = state.snapshot();
    let options = RunOptions { chained: req.chained };
    let report = blocking(move || Ok(run_suite(&cases, &pipeline, options, None)?)).await?;
    Ok(Json(report))
}
