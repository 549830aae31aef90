//! HTTP facade over the simrag pipeline: ingestion, branching chat
//! sessions with optional validator-driven refinement, chunk lookup and
//! eval runs. Responses are JSON; failures use `{"error": {code, message}}`.

pub mod app;
pub mod error;

pub use app::{router, AppState, SharedState, StartupError};
pub use error::ApiError;

/// Bind `config.bind_address` and serve until Ctrl-C.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let addr = state.config().bind_address.clone();
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(std::sync::Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
