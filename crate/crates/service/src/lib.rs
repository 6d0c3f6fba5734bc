//! HTTP service over the diagnosis orchestrator: case storage, task runs,
//! physician verification, traces and usage.

pub mod api;
pub mod error;
pub mod jobs;
pub mod store;

use std::future::Future;
use std::sync::Arc;

use hygieia_core::config::{AppConfig, ConfigError};
use hygieia_core::gateway::Script;
use thiserror::Error;
use tokio::net::TcpListener;

pub use api::{router, AppState};
pub use error::{ApiError, FieldError};
pub use jobs::{JobState, JobStatus, Jobs, ResultRef};
pub use store::{OutcomeEntry, OutcomeResult, Store, StoreError, StoredCase};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("bearer token variable {0} is unset or empty; set it or disable auth")]
    MissingToken(String),
    #[error("cannot listen on {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("server error: {0}")]
    Serve(String),
}

/// Builds the engine, opens the store and reads the API token.
pub async fn state_from_config(config: &AppConfig, script: Option<Script>) -> Result<AppState, ServiceError> {
    let token = if config.auth.disabled {
        None
    } else {
        let var = &config.auth.token_env;
        let token = std::env::var(var).ok().filter(|t| !t.is_empty());
        Some(token.ok_or_else(|| ServiceError::MissingToken(var.clone()))?)
    };
    let engine = config.build_engine(script).await?;
    let store = Store::open(&config.store_dir)?;
    Ok(AppState::new(
        Arc::new(engine.orchestrator),
        config.pipeline.clone(),
        store,
        token,
    ))
}

/// Serves until `shutdown` resolves, then drains requests and syncs the journals.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    cors_origin: Option<&str>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = router(state.clone(), cors_origin);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ServiceError::Serve(e.to_string()))?;
    state.sync()?;
    Ok(())
}

/// Binds `config.listen` and serves.
pub async fn run(
    config: &AppConfig,
    script: Option<Script>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let state = state_from_config(config, script).await?;
    let listener = TcpListener::bind(&config.listen).await.map_err(|e| ServiceError::Bind {
        addr: config.listen.clone(),
        message: e.to_string(),
    })?;
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, store = %config.store_dir.display(), "listening");
    }
    serve(listener, state, config.cors_origin.as_deref(), shutdown).await
}
