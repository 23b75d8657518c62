//! Wire protocol for the detection relay.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use stepnav_core::nav::LogicalTime;
use stepnav_core::relay::{RelayError, RelayStore, SubmitOutcome};
use tower_http::cors::CorsLayer;

use crate::error::ApiError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionReport {
    device_id: String,
    tag_id: String,
    detected_at: LogicalTime,
}

pub fn relay_router(store: Arc<RelayStore>) -> Router {
    Router::new()
        .route("/detections", post(submit).get(fetch))
        .route("/admin/purge", post(purge))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

async fn submit(State(store): State<Arc<RelayStore>>, body: Bytes) -> Result<Json<SubmitOutcome>, ApiError> {
    let report: DetectionReport =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    store
        .submit_detection(&report.device_id, &report.tag_id, report.detected_at)
        .map(Json)
        .map_err(|RelayError::MalformedReport(m)| ApiError::BadRequest(m))
}

async fn fetch(
    State(store): State<Arc<RelayStore>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let consumer = params
        .get("consumer")
        .filter(|c| !c.is_empty())
        .ok_or_else(|| ApiError::BadRequest("consumer parameter is required".into()))?;
    Ok(Json(json!({ "detections": store.fetch_new(consumer) })))
}

async fn purge(
    State(store): State<Arc<RelayStore>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let age: u64 = params
        .get("age")
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| ApiError::BadRequest("age must be a non-negative integer".into()))?;
    Ok(Json(json!({ "removed": store.purge_older_than(age) })))
}

/// Periodically drop delivered detections older than `retention_ms`.
pub fn spawn_retention(store: Arc<RelayStore>, retention_ms: u64, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let removed = store.purge_older_than(retention_ms);
            if removed > 0 {
                tracing::debug!(removed, "retention purge");
            }
        }
    })
}
