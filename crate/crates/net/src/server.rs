//! Review service over HTTP/JSON.
//!
//! GET  /api/tasks/next?annotator=<id>   200 task | 204 none left | 401 unknown annotator
//! POST /api/tasks/{id}/verdict          200 task | 400 | 401 | 404 | 409
//! GET  /api/batches/{id}/summary        200 BatchDecision | 404
//! GET  /api/health
//!
//! Everything else is served from the UI asset directory when one is given.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hallubench_core::review::{FacetVerdict, ReviewService, TaskId};
use hallubench_core::{Error, Result};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

const PLACEHOLDER: &str = "<!doctype html><title>review</title><p>No UI assets configured. The JSON API lives under /api/.</p>";

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::Unauthorized { .. } => StatusCode::UNAUTHORIZED,
            Error::Conflict { .. } => StatusCode::CONFLICT,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Contract(_) | Error::Schema { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type Svc = Arc<ReviewService>;

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_task(State(svc): State<Svc>, Query(q): Query<NextQuery>) -> std::result::Result<Response, ApiError> {
    let annotator = q
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| Error::contract("annotator query parameter is required"))?;
    Ok(match svc.next_task(&annotator)? {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(
    State(svc): State<Svc>,
    Path(id): Path<TaskId>,
    body: Bytes,
) -> std::result::Result<Response, ApiError> {
    let verdict: FacetVerdict = serde_json::from_slice(&body).map_err(|e| Error::contract(format!("verdict body: {e}")))?;
    let annotator = verdict.annotator.clone();
    let task = svc.submit(id, verdict)?;
    log::info!(
        "event=verdict task={id} annotator={annotator} count={} status={:?}",
        task.verdicts.len(),
        task.status
    );
    Ok(Json(task).into_response())
}

async fn summary(State(svc): State<Svc>, Path(id): Path<String>) -> std::result::Result<Response, ApiError> {
    Ok(Json(svc.summary(&id)?).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "ok": true }))
}

pub fn router(svc: Svc, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}/verdict", post(submit))
        .route("/api/batches/{id}/summary", get(summary))
        .route("/api/health", get(health))
        .with_state(svc);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits (Ctrl-C).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `app` until shutdown or Ctrl-C.
pub fn serve(addr: SocketAddr, app: Router) -> Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let stop = async {
                tokio::select! {
                    _ = rx => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                log::error!("event=server_error error={e}");
            }
        });
    });
    log::info!("event=server_listening addr={addr}");
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
