//! A small scoring service for tests and local runs.
//!
//! Serves `POST /score` and `GET /health` with any in-process [`Scorer`],
//! typically [`LexicalQe`](qefuse::scoring::LexicalQe) or an
//! [`OracleScorer`](qefuse::scoring::OracleScorer).

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qefuse::scoring::wire::{ErrorResponse, ScoreBatchRequest, ScoreBatchResponse, HEALTH_PATH, SCORE_PATH};
use qefuse::scoring::{ScoreError, Scorer};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

/// Request counters shared with the running server.
#[derive(Debug, Default)]
pub struct Counters {
    calls: AtomicU64,
    items: AtomicU64,
}

impl Counters {
    /// `/score` requests received, including rejected ones.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Pairs scored successfully.
    pub fn items(&self) -> u64 {
        self.items.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.items.store(0, Ordering::SeqCst);
    }
}

#[derive(Clone)]
struct AppState {
    scorer: Arc<dyn Scorer>,
    counters: Arc<Counters>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorResponse { error: message.into() })).into_response()
}

async fn score(State(state): State<AppState>, body: Bytes) -> Response {
    state.counters.calls.fetch_add(1, Ordering::SeqCst);
    let request: ScoreBatchRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request body: {e}")),
    };
    let n = request.pairs.len() as u64;
    let scorer = state.scorer.clone();
    let scored = tokio::task::spawn_blocking(move || scorer.score_batch(&request.pairs)).await;
    match scored {
        Ok(Ok(scores)) => {
            state.counters.items.fetch_add(n, Ordering::SeqCst);
            Json(ScoreBatchResponse { scores }).into_response()
        }
        Ok(Err(e @ ScoreError::UnknownSource(_))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("scorer panicked: {e}")),
    }
}

async fn health() -> StatusCode {
    StatusCode::OK
}

pub fn router(scorer: Arc<dyn Scorer>, counters: Arc<Counters>) -> Router {
    Router::new()
        .route(SCORE_PATH, post(score))
        .route(HEALTH_PATH, get(health))
        .with_state(AppState { scorer, counters })
}

/// Serves until the process is killed.
pub fn serve(addr: SocketAddr, scorer: Arc<dyn Scorer>) -> io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        eprintln!("scoring on http://{}", listener.local_addr()?);
        axum::serve(listener, router(scorer, Arc::default())).await
    })
}

/// A server running on a background thread, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    counters: Arc<Counters>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for an HTTP scorer endpoint.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a server on `addr` (port 0 picks a free port) and returns once
/// it is accepting connections.
pub fn spawn(addr: SocketAddr, scorer: Arc<dyn Scorer>) -> io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let counters = Arc::new(Counters::default());
    let app = router(scorer, counters.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::Builder::new().name("qefuse-scorer".into()).spawn(move || {
        runtime.block_on(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServerHandle {
        addr,
        counters,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// [`spawn`] on an ephemeral localhost port.
pub fn spawn_local(scorer: Arc<dyn Scorer>) -> io::Result<ServerHandle> {
    spawn(SocketAddr::from(([127, 0, 0, 1], 0)), scorer)
}
