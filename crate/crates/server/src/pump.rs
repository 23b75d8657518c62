//! Polls the relay and feeds detections into routed sessions.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use stepnav_core::detection::TagDetection;
use stepnav_core::relay::{RelayStore, DEFAULT_POLL_INTERVAL_MS};
use thiserror::Error;

use crate::hub::SessionHub;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("relay unreachable: {0}")]
    Unreachable(String),
    #[error("relay rejected the request: {0}")]
    Rejected(String),
}

#[async_trait]
pub trait DetectionSource: Send + Sync {
    async fn fetch_new(&self, consumer_id: &str) -> Result<Vec<TagDetection>, SourceError>;
}

#[async_trait]
impl DetectionSource for RelayStore {
    async fn fetch_new(&self, consumer_id: &str) -> Result<Vec<TagDetection>, SourceError> {
        Ok(RelayStore::fetch_new(self, consumer_id))
    }
}

#[derive(Debug, Clone)]
pub struct PumpConfig {
    pub consumer_id: String,
    pub poll_interval: Duration,
    /// Upper bound for the retry delay while the relay is unreachable.
    pub max_backoff: Duration,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig {
            consumer_id: "session-service".into(),
            poll_interval: Duration::from_millis(DEFAULT_POLL_INTERVAL_MS),
            max_backoff: Duration::from_secs(8),
        }
    }
}

pub struct Pump {
    hub: Arc<SessionHub>,
    source: Arc<dyn DetectionSource>,
    config: PumpConfig,
}

impl Pump {
    pub fn new(hub: Arc<SessionHub>, source: Arc<dyn DetectionSource>, config: PumpConfig) -> Self {
        Pump { hub, source, config }
    }

    /// One fetch and delivery round. Returns the number of applications.
    pub async fn poll_once(&self) -> Result<usize, SourceError> {
        let mut detections = self.source.fetch_new(&self.config.consumer_id).await?;
        detections.sort_by_key(|d| d.seq);
        Ok(self.hub.deliver(&detections))
    }

    /// Poll forever. Failures back off exponentially from one poll interval
    /// up to `max_backoff`; a success resets the delay.
    pub async fn run(self) {
        let mut backoff = self.config.poll_interval;
        loop {
            match self.poll_once().await {
                Ok(_) => {
                    backoff = self.config.poll_interval;
                    tokio::time::sleep(self.config.poll_interval).await;
                }
                Err(e) => {
                    tracing::warn!(error = %e, retry_in_ms = backoff.as_millis() as u64, "relay poll failed");
                    tokio::time::sleep(backoff).await;
                    backoff = (backoff * 2).min(self.config.max_backoff.max(self.config.poll_interval));
                }
            }
        }
    }

    pub fn spawn(self) -> tokio::task::JoinHandle<()> {
        tokio::spawn(self.run())
    }
}
