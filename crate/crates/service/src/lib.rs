//! HTTP service: upload, staged processing jobs, persistence, rendering and
//! the aggregation endpoints behind the web views.

pub mod api;
pub mod error;
pub mod jobs;
pub mod secrets;
pub mod store;
pub mod views;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use layerlab_core::builtin::default_registry;
use layerlab_core::predict::Registry;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use jobs::{JobManager, ProcessingJob, Stage, StageState};
pub use secrets::InlineSecrets;
pub use store::Store;

pub const DEFAULT_PORT: u16 = 8402;
pub const DEFAULT_MAX_UPLOAD_MB: usize = 50;
pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub port: u16,
    pub max_upload_bytes: usize,
    /// Documents processed in parallel.
    pub workers: usize,
    /// Built webapp served at `/`, if present.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("./data"),
            port: DEFAULT_PORT,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_MB * 1024 * 1024,
            workers: DEFAULT_WORKERS,
            static_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid value for {var}: {value:?}")]
    InvalidEnv { var: &'static str, value: String },
    #[error("cannot bind port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn env_parse<T: std::str::FromStr>(var: &'static str) -> Result<Option<T>, ServiceError> {
    match std::env::var(var) {
        Ok(value) if !value.trim().is_empty() => value
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ServiceError::InvalidEnv { var, value }),
        _ => Ok(None),
    }
}

impl ServiceConfig {
    /// Defaults overridden by `LAYERLAB_DATA_DIR`, `LAYERLAB_PORT`,
    /// `LAYERLAB_MAX_UPLOAD_MB`, `LAYERLAB_WORKERS` and `LAYERLAB_STATIC_DIR`.
    pub fn from_env() -> Result<Self, ServiceError> {
        let mut cfg = Self::default();
        if let Some(dir) = env_parse::<PathBuf>("LAYERLAB_DATA_DIR")? {
            cfg.data_dir = dir;
        }
        if let Some(port) = env_parse("LAYERLAB_PORT")? {
            cfg.port = port;
        }
        if let Some(mb) = env_parse::<usize>("LAYERLAB_MAX_UPLOAD_MB")? {
            cfg.max_upload_bytes = mb * 1024 * 1024;
        }
        if let Some(workers) = env_parse::<usize>("LAYERLAB_WORKERS")? {
            cfg.workers = workers.max(1);
        }
        cfg.static_dir = env_parse::<PathBuf>("LAYERLAB_STATIC_DIR")?;
        Ok(cfg)
    }
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    pub store: Arc<Store>,
    pub jobs: Arc<JobManager>,
    pub registry: Arc<Registry>,
    pub secrets: Arc<InlineSecrets>,
}

impl AppState {
    /// Open (creating if needed) the data directory with the default
    /// predictor registry.
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        Self::with_registry(config, default_registry())
    }

    pub fn with_registry(config: ServiceConfig, registry: Registry) -> std::io::Result<Self> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        Ok(Self {
            jobs: JobManager::new(store.clone(), config.workers),
            store,
            config: Arc::new(config),
            registry: Arc::new(registry),
            secrets: Arc::new(InlineSecrets::default()),
        })
    }
}

/// The full application: API routes plus the optional static mount.
pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let app = api::routes(state);
    match static_dir {
        Some(dir) if dir.is_dir() => app.fallback_service(ServeDir::new(dir)),
        _ => app,
    }
}

/// Bind the configured port (0 picks a free one).
pub async fn bind(config: &ServiceConfig) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(("127.0.0.1", config.port))
        .await
        .map_err(|source| ServiceError::Bind {
            port: config.port,
            source,
        })
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A service running on its own runtime thread; stops when dropped.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    pub state: AppState,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(config: ServiceConfig) -> Result<Self, ServiceError> {
        Self::start_with(config, default_registry())
    }

    pub fn start_with(mut config: ServiceConfig, registry: Registry) -> Result<Self, ServiceError> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = rt.block_on(bind(&config))?;
        let addr = listener.local_addr()?;
        config.port = addr.port();
        let state = AppState::with_registry(config, registry)?;
        let (stop, stopped) = oneshot::channel::<()>();
        let served = state.clone();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                tokio::select! {
                    res = serve(listener, served, std::future::pending()) => {
                        if let Err(e) = res {
                            tracing::error!("service stopped: {e}");
                        }
                    }
                    _ = stopped => {}
                }
            });
            rt.shutdown_background();
        });
        Ok(Self {
            addr,
            state,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
