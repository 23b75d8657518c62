//! HTTP front ends for the detection relay and navigation sessions, plus
//! the pump that feeds relay detections into live sessions.

pub mod client;
pub mod clock;
pub mod error;
pub mod hub;
pub mod pump;
pub mod relay_api;
pub mod session_api;

pub use client::{HttpRelaySink, HttpRelaySource};
pub use clock::TokioClock;
pub use error::ApiError;
pub use hub::{CreateSession, SessionDefaults, SessionDescriptor, SessionHub};
pub use pump::{DetectionSource, Pump, PumpConfig, SourceError};
pub use relay_api::{relay_router, spawn_retention};
pub use session_api::session_router;

pub use axum::Router;

/// Serve `router` until `shutdown` resolves, then finish in-flight requests.
pub async fn serve<F>(listener: tokio::net::TcpListener, router: Router, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}
