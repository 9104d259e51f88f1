//! HTTP front end for the ingestion service.
//!
//! * `POST /v1/events` takes one record (or newline-delimited records) and
//!   answers 202, 400, 403 or 429.
//! * `GET /v1/collector.js` serves the browser collector for async embedding.
//! * `GET /v1/health` reports liveness and counters.
//!
//! Requests sent by the collector script carry `X-Engage-Collector: 1`;
//! anything else counts as a bare page hit. The client address is taken from
//! the first `X-Forwarded-For` entry when a fronting proxy sets it.

use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use thiserror::Error;
use tokio::sync::oneshot;
use tracing::info;

use super::classify::RequestMeta;
use super::service::{IngestConfig, IngestService, StatsSnapshot, SubmitError, WorkerPool};
use super::store::EventStore;

pub const COLLECTOR_HEADER: &str = "x-engage-collector";

const FALLBACK_SCRIPT: &str = "/* engage collector: no script configured on this server */\n";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub ingest: IngestConfig,
    /// Served at `/v1/collector.js`.
    pub collector_script: Option<PathBuf>,
    /// Also stop on SIGINT / Ctrl-C.
    pub stop_on_ctrl_c: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            ingest: IngestConfig::default(),
            collector_script: None,
            stop_on_ctrl_c: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("could not bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("could not read collector script {path}: {source}")]
    Script {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("server failure: {0}")]
    Runtime(#[from] std::io::Error),
}

struct AppState {
    service: IngestService,
    script: String,
}

/// A server running on its own thread.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<StatsSnapshot, ServeError>>>,
    state: Arc<AppState>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.state.service.stats().snapshot()
    }

    pub fn queue_depth(&self) -> usize {
        self.state.service.queue().depth()
    }

    /// Stops accepting requests, drains the queue into the store and returns
    /// the final counters.
    pub fn shutdown(mut self) -> Result<StatsSnapshot, ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.join_inner()
    }

    /// Waits for the server to stop on its own (Ctrl-C).
    pub fn join(mut self) -> Result<StatsSnapshot, ServeError> {
        self.join_inner()
    }

    fn join_inner(&mut self) -> Result<StatsSnapshot, ServeError> {
        match self.thread.take() {
            Some(handle) => handle.join().expect("server thread panicked"),
            None => Ok(self.stats()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.thread.take() {
            let _ = handle.join();
        }
    }
}

/// Binds and starts serving. Returns once the socket is bound.
pub fn start(
    config: ServerConfig,
    store: Arc<dyn EventStore>,
) -> Result<RunningServer, ServeError> {
    let script = match &config.collector_script {
        Some(path) => std::fs::read_to_string(path).map_err(|source| ServeError::Script {
            path: path.clone(),
            source,
        })?,
        None => FALLBACK_SCRIPT.to_string(),
    };
    let listener = TcpListener::bind(config.addr).map_err(|source| ServeError::BindFailure {
        addr: config.addr,
        source,
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let state = Arc::new(AppState {
        service: IngestService::new(&config.ingest),
        script,
    });
    let pool = WorkerPool::spawn(
        Arc::clone(state.service.queue()),
        store,
        Arc::clone(state.service.stats()),
        config.ingest.workers,
        config.ingest.batch_size,
    );

    let (tx, rx) = oneshot::channel::<()>();
    let app_state = Arc::clone(&state);
    let stop_on_ctrl_c = config.stop_on_ctrl_c;
    let thread = std::thread::Builder::new()
        .name("ingest-http".into())
        .spawn(move || -> Result<StatsSnapshot, ServeError> {
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            let app = router(Arc::clone(&app_state));
            let served = runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                info!(%addr, "ingestion service listening");
                axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
                    .with_graceful_shutdown(async move {
                        if stop_on_ctrl_c {
                            tokio::select! {
                                _ = rx => {}
                                _ = tokio::signal::ctrl_c() => info!("interrupt received, shutting down"),
                            }
                        } else {
                            let _ = rx.await;
                        }
                    })
                    .await
            });
            runtime.shutdown_background();
            pool.shutdown();
            served?;
            Ok(app_state.service.stats().snapshot())
        })?;

    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
        state,
    })
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/events", post(submit).options(preflight))
        .route("/v1/collector.js", get(collector_script))
        .route("/v1/health", get(health))
        .with_state(state)
}

fn request_meta(peer: SocketAddr, headers: &HeaderMap) -> RequestMeta {
    let header_str = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
    };
    let source_ip = header_str("x-forwarded-for")
        .split(',')
        .next()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| peer.ip().to_string());
    RequestMeta {
        source_ip,
        user_agent: header_str(header::USER_AGENT.as_str()).to_string(),
        executed_collector: header_str(COLLECTOR_HEADER) == "1",
        arrival_time: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(1),
    }
}

async fn submit(
    State(state): State<Arc<AppState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let meta = request_meta(peer, &headers);
    let (status, body) = match state.service.handle_submit(&body, &meta) {
        Ok(ack) => (StatusCode::ACCEPTED, json!({ "accepted": ack.events })),
        Err(e @ SubmitError::Malformed { .. }) => {
            (StatusCode::BAD_REQUEST, json!({ "error": e.to_string() }))
        }
        Err(e @ SubmitError::BotRejected(_)) => {
            (StatusCode::FORBIDDEN, json!({ "error": e.to_string() }))
        }
        Err(e @ (SubmitError::Backpressure | SubmitError::ShuttingDown)) => {
            let mut response = (
                StatusCode::TOO_MANY_REQUESTS,
                Json(json!({ "error": e.to_string() })),
            )
                .into_response();
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
            return with_cors(response);
        }
    };
    with_cors((status, Json(body)).into_response())
}

async fn preflight() -> Response {
    let mut response = StatusCode::NO_CONTENT.into_response();
    let headers = response.headers_mut();
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("POST, OPTIONS"),
    );
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type, x-engage-collector"),
    );
    with_cors(response)
}

fn with_cors(mut response: Response) -> Response {
    response.headers_mut().insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    response
}

async fn collector_script(State(state): State<Arc<AppState>>) -> Response {
    let mut response = state.script.clone().into_response();
    let headers = response.headers_mut();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/javascript; charset=utf-8"),
    );
    headers.insert(
        header::CACHE_CONTROL,
        HeaderValue::from_static("public, max-age=3600"),
    );
    headers.insert(
        header::X_CONTENT_TYPE_OPTIONS,
        HeaderValue::from_static("nosniff"),
    );
    with_cors(response)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let queue = state.service.queue();
    Json(json!({
        "status": "ok",
        "queueDepth": queue.depth(),
        "queueCapacity": queue.capacity(),
        "stats": state.service.stats().snapshot(),
    }))
}
