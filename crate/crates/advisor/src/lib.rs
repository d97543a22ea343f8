//! Session-oriented HTTP service for running an accelerated life test one
//! unit at a time.
//!
//! Each session recommends the next run, takes back the observed lifetime
//! (or the fact that the unit survived to the end of its test) and reports
//! the updated ranking of materials. Sessions are event-sourced: every state
//! change is appended to `<data-dir>/<id>.jsonl` and the in-memory state is
//! rebuilt from those logs on start-up.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create, `201 {session_id}` |
//! | GET | `/sessions/{id}/recommendation` | next run (idempotent until answered) |
//! | POST | `/sessions/{id}/observations` | `{lifetime: number \| null, tau?: number}` |
//! | POST | `/sessions/{id}/recommendation/void` | abandon the outstanding run |
//! | GET | `/sessions/{id}` | belief, ranking and event history |
//! | GET | `/sessions/{id}/export` | event log |
//! | POST | `/sessions/import` | recreate from an export |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use tower_http::services::ServeDir;

pub mod config;
pub mod error;
pub mod http;
pub mod session;
pub mod store;

pub use config::{CreateRequest, PriorSpec, SessionConfig};
pub use error::ApiError;
pub use http::SessionExport;
pub use session::{Event, LoggedEvent, RankRow, Recommendation, Session};
pub use store::Store;

/// API routes, plus static files from `static_dir` for any other path.
pub fn app(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = http::routes(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
}

/// Restores sessions from `data_dir` and serves until Ctrl-C.
pub async fn serve(opts: ServeOptions) -> Result<(), ApiError> {
    let store = Arc::new(Store::open(&opts.data_dir)?);
    let listener = tokio::net::TcpListener::bind(opts.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %opts.data_dir.display(), "advisor listening");
    axum::serve(listener, app(store, opts.static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
