#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use simrag_core::config::SimragConfig;
use simrag_core::corpus::SourceCategory;
use simrag_server::{router, AppState};
use tower::ServiceExt;

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub struct TestApp {
    pub state: Arc<AppState>,
    pub router: Router,
    pub dir: tempfile::TempDir,
}

impl TestApp {
    pub fn new(configure: impl FnOnce(&mut SimragConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SimragConfig {
            data_dir: dir.path().join("data"),
            ..SimragConfig::default()
        };
        configure(&mut config);
        let state = Arc::new(AppState::open(config).unwrap());
        Self {
            router: router(Arc::clone(&state)),
            state,
            dir,
        }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let request = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(match body {
                Some(v) => Body::from(v.to_string()),
                None => Body::empty(),
            })
            .unwrap();
        let response = self.router.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes)
                .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    /// Ingest every fixture corpus file through the HTTP endpoint.
    pub async fn ingest_fixtures(&self) -> usize {
        let mut chunks = 0;
        for category in SourceCategory::ALL {
            let dir = repo().join("fixtures/corpus").join(category.as_str());
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            for file in files {
                let (status, body) = self
                    .post(
                        "/api/ingest",
                        serde_json::json!({"path": file, "category": category.as_str()}),
                    )
                    .await;
                assert_eq!(status, StatusCode::OK, "{body}");
                chunks += body["chunk_count"].as_u64().unwrap() as usize;
            }
        }
        chunks
    }

    pub async fn new_session(&self) -> String {
        let (status, body) = self.post("/api/sessions", serde_json::json!({})).await;
        assert_eq!(status, StatusCode::OK);
        body["session_id"].as_str().unwrap().to_string()
    }
}

pub fn encode_chunk_id(id: &str) -> String {
    id.replace('#', "%23")
}
