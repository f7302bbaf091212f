//! HTTP service: session lifecycle, catalog administration and metrics,
//! persisted as an append-only event log.

pub mod config;
pub mod eventlog;
pub mod routes;
pub mod state;

pub use config::{AdapterChoice, ConfigError, EmbedderChoice, ServiceConfig};
pub use routes::router;
pub use state::{AppState, StateError};

use std::sync::Arc;

/// Serve until the listener fails.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(state)).await
}
