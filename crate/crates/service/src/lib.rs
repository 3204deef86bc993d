//! HTTP session service for interactive segmentation.
//!
//! A client uploads a channel stack, replaces its scribbles, asks for a
//! distance map once per method and then re-thresholds the cached map as
//! often as it likes. See [`router`] for the endpoints.

mod handlers;
mod render;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use session::{AppState, DistanceRequest};

/// Default idle time after which a session is dropped.
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub session_ttl: Duration,
    /// Directory of built UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_ttl: DEFAULT_SESSION_TTL,
            static_dir: None,
            max_upload_bytes: 1 << 30,
        }
    }
}

/// Builds the HTTP API:
///
/// - `POST /sessions` with a CST body, or multipart parts `stack` and optional `gt`
/// - `PUT /sessions/{id}/scribbles`, `PUT /sessions/{id}/gt`
/// - `POST /sessions/{id}/distance?method=&lambda=&iters=`
/// - `GET /sessions/{id}/distance?method=` (raw map as CST)
/// - `GET /sessions/{id}/segmentation?method=&t=&format=pgm|png`
/// - `GET /sessions/{id}/dice-curve?method=&format=json|csv`
/// - `GET /sessions/{id}/preview?bands=`
/// - `GET /healthz`
pub fn router(state: AppState) -> Router {
    let static_dir = state.config().static_dir.clone();
    let limit = state.config().max_upload_bytes;
    let api = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(handlers::create_session))
        .route("/sessions/{id}/scribbles", put(handlers::put_scribbles))
        .route("/sessions/{id}/gt", put(handlers::put_gt))
        .route(
            "/sessions/{id}/distance",
            post(handlers::compute_distance).get(handlers::get_distance),
        )
        .route(
            "/sessions/{id}/segmentation",
            get(handlers::get_segmentation),
        )
        .route("/sessions/{id}/dice-curve", get(handlers::get_dice_curve))
        .route("/sessions/{id}/preview", get(handlers::get_preview))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the listener fails, dropping idle sessions in the background.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    let reaper = state.clone();
    let period =
        (state.config().session_ttl / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let dropped = reaper.drop_expired();
            if dropped > 0 {
                log::info!("dropped {dropped} idle sessions");
            }
        }
    });
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(state)).await
}

/// Binds `0.0.0.0:port` and serves.
pub async fn serve_on_port(port: u16, state: AppState) -> std::io::Result<()> {
    let listener = TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    serve(listener, state).await
}
