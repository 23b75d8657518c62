//! HTTP clients for a remote relay.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;
use stepnav_core::detection::TagDetection;
use stepnav_core::nav::LogicalTime;
use stepnav_core::recognizer::{DetectionSink, SinkError};
use stepnav_core::relay::SubmitOutcome;

use crate::pump::{DetectionSource, SourceError};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(5);

/// Accepts `host:port` or a full `http://` URL.
pub fn base_url(addr: &str) -> String {
    let addr = addr.trim_end_matches('/');
    if addr.starts_with("http://") || addr.starts_with("https://") {
        addr.to_string()
    } else {
        format!("http://{addr}")
    }
}

#[derive(Deserialize)]
struct FetchBody {
    detections: Vec<TagDetection>,
}

#[derive(Deserialize)]
struct ErrorBody {
    message: String,
}

/// Async poller used by the session service.
#[derive(Debug, Clone)]
pub struct HttpRelaySource {
    client: reqwest::Client,
    base: String,
}

impl HttpRelaySource {
    pub fn new(addr: &str) -> Self {
        let client = reqwest::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("http client builds");
        HttpRelaySource { client, base: base_url(addr) }
    }
}

#[async_trait]
impl DetectionSource for HttpRelaySource {
    async fn fetch_new(&self, consumer_id: &str) -> Result<Vec<TagDetection>, SourceError> {
        let resp = self
            .client
            .get(format!("{}/detections", self.base))
            .query(&[("consumer", consumer_id)])
            .send()
            .await
            .map_err(|e| SourceError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SourceError::Rejected(format!("status {}", resp.status())));
        }
        let body: FetchBody = resp.json().await.map_err(|e| SourceError::Unreachable(e.to_string()))?;
        Ok(body.detections)
    }
}

/// Blocking submitter used by the recognizer simulator. Must not be used
/// from inside an async runtime.
#[derive(Debug, Clone)]
pub struct HttpRelaySink {
    client: reqwest::blocking::Client,
    base: String,
}

impl HttpRelaySink {
    pub fn new(addr: &str) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("http client builds");
        HttpRelaySink { client, base: base_url(addr) }
    }
}

impl DetectionSink for HttpRelaySink {
    fn submit(&mut self, device_id: &str, tag_id: &str, detected_at: LogicalTime) -> Result<SubmitOutcome, SinkError> {
        let resp = self
            .client
            .post(format!("{}/detections", self.base))
            .json(&json!({ "device_id": device_id, "tag_id": tag_id, "detected_at": detected_at }))
            .send()
            .map_err(|e| SinkError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            resp.json().map_err(|e| SinkError::Unreachable(e.to_string()))
        } else {
            let message = resp
                .json::<ErrorBody>()
                .map(|b| b.message)
                .unwrap_or_else(|_| format!("status {status}"));
            Err(SinkError::Rejected(message))
        }
    }
}
