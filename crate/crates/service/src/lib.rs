//! HTTP/JSON service for exploring a trained credit model's fairness.
//!
//! Read endpoints never change state. Session-scoped what-if edits,
//! thresholds, preference records and team consensus are kept in memory
//! and written through to JSON files in the store directory, so a restart
//! serves the same documents.
//!
//! ```no_run
//! # async fn run() -> Result<(), Box<dyn std::error::Error>> {
//! use std::path::Path;
//! let state = fee_service::AppState::load(
//!     Path::new("german.data"),
//!     Path::new("model.json"),
//!     Path::new("store"),
//! )?;
//! fee_service::serve("127.0.0.1:8080".parse()?, state).await?;
//! # Ok(()) }
//! ```

pub mod error;
mod routes;
pub mod state;
pub mod store;

use std::net::SocketAddr;

pub use error::{ApiError, ErrorBody};
pub use routes::round_percentages;
pub use state::{AppState, Session, StartupError};
pub use store::{DiskStore, StoreError};

pub fn app(state: AppState) -> axum::Router {
    routes::router(state)
}

/// Binds and serves until the task is cancelled.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app(state)).await
}
