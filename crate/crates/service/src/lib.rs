//! HTTP service exposing an OpenFGA-shaped subset of routes over the tuple
//! store and check engine.
//!
//! | route | body | response |
//! |---|---|---|
//! | `POST /stores` | `{name}` | `201 {id, name}` |
//! | `POST /stores/{id}/authorization-models` | interchange model | `201 {authorization_model_id}` |
//! | `POST /stores/{id}/write` | `{writes: {tuple_keys}, deletes: {tuple_keys}}` | `200 {}` |
//! | `POST /stores/{id}/check` | `{tuple_key, context, contextual_tuples: {tuple_keys}}` | `200 {allowed}` |
//!
//! Every other route answers `404` with the error body used throughout:
//! `{"code": "...", "message": "..."}`.

mod error;
mod routes;

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::post;
use axum::Router;
use ods_core::store::{Store, StoreError};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

pub use error::ApiError;

/// Environment variable holding the optional static bearer token.
pub const TOKEN_ENV: &str = "ODS_SERVICE_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub listen_port: u16,
    pub data_dir: PathBuf,
    pub request_body_limit: usize,
    pub max_concurrent_checks: usize,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen_port: 8080,
            data_dir: data_dir.into(),
            request_body_limit: 1 << 20,
            max_concurrent_checks: 64,
            bearer_token: None,
        }
    }

    /// Reads the bearer token from [`TOKEN_ENV`] if present.
    pub fn with_env_token(mut self) -> Self {
        self.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot open store {path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) struct AppState {
    data_dir: PathBuf,
    stores: RwLock<HashMap<String, Arc<Store>>>,
    checks: Semaphore,
    token: Option<String>,
}

impl AppState {
    fn store(&self, id: &str) -> Result<Arc<Store>, ApiError> {
        self.stores
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("store `{id}` not found")))
    }
}

/// Opens every store under `config.data_dir` and builds the router.
pub fn router(config: &ServiceConfig) -> Result<Router, ServiceError> {
    if config.request_body_limit == 0 || config.max_concurrent_checks == 0 {
        return Err(ServiceError::Config("limits must be positive".into()));
    }
    fs::create_dir_all(&config.data_dir)?;
    let mut stores = HashMap::new();
    for entry in fs::read_dir(&config.data_dir)? {
        let path = entry?.path();
        if !path.join("meta").is_file() {
            continue;
        }
        let store = Store::open(&path).map_err(|source| ServiceError::Store { path, source })?;
        stores.insert(store.store_id(), Arc::new(store));
    }
    let state = Arc::new(AppState {
        data_dir: config.data_dir.clone(),
        stores: RwLock::new(stores),
        checks: Semaphore::new(config.max_concurrent_checks),
        token: config.bearer_token.clone(),
    });
    Ok(Router::new()
        .route("/stores", post(routes::create_store))
        .route("/stores/{id}/authorization-models", post(routes::put_model))
        .route("/stores/{id}/write", post(routes::write))
        .route("/stores/{id}/check", post(routes::check))
        .fallback(routes::fallback)
        .layer(axum::middleware::from_fn_with_state(state.clone(), routes::authenticate))
        .layer(DefaultBodyLimit::max(config.request_body_limit))
        .with_state(state))
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = router(config)?;
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Binds `0.0.0.0:<listen_port>` and serves until interrupted.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServiceError> {
    let listener = TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], config.listen_port))).await?;
    serve_on(listener, config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
