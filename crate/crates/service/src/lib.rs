//! Leaderboard HTTP service: authenticated uploads, a UTC-day submission
//! quota, journaled persistence and rankings with a freeze date.

pub mod api;
pub mod clock;
pub mod config;
pub mod journal;
pub mod leaderboard;
pub mod record;
pub mod state;

use std::sync::Arc;

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{Config, ConfigError, Team};
pub use leaderboard::{Leaderboard, LeaderboardEntry};
pub use record::{RecordMetrics, Status, SubmissionRecord};
pub use state::{Service, ServiceError, StartupError};

/// Opens the service and serves HTTP until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let bind = config.bind;
    let service = Arc::new(Service::open(config, Arc::new(SystemClock))?);
    let resumed = service.resume_queued();
    if resumed > 0 {
        tracing::info!(resumed, "rescoring queued submissions");
    }
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(%bind, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
