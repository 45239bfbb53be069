//! HTTP service for the mlndash dashboard.
//!
//! Routes:
//!
//! | method | path                 | query                                    |
//! |--------|----------------------|------------------------------------------|
//! | GET    | `/api/v1/map`        | `feature`, `pa`, `pb`                    |
//! | GET    | `/api/v1/timeline`   | `states`, `left`, `right`, `range`       |
//! | GET    | `/api/v1/ticker`     | `states` (optional)                      |
//! | GET    | `/api/v1/articles`   | `period` or `pa` + `pb`; `k` (default 10)|
//! | POST   | `/admin/refresh`     |                                          |
//! | POST   | `/admin/invalidate`  | `kind` (optional: `map`, `timeline`)     |
//! | GET    | `/healthz`           |                                          |
//!
//! Date ranges are written `YYYY-MM-DD:YYYY-MM-DD` (`..` also accepted).
//! Visualization responses carry `X-Cache: HIT` or `MISS`. Client errors
//! return `{"error": code, "detail": text}`.

pub mod api;
pub mod config;
pub mod error;
pub mod snapshot;

use std::sync::Arc;

pub use api::{router, AppState};
pub use config::ServiceConfig;

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let addr = config.validate()?;
    let state = Arc::new(AppState::new(config)?);
    let timer = api::spawn_refresh_timer(state.clone());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    timer.abort();
    state.cache().persist()?;
    Ok(())
}

pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_target(false).try_init();
}
