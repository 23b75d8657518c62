//! HTTP and event-stream front end for [`SessionHub`].

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use stepnav_core::nav::{export_log, Command, OverviewView};
use tokio::sync::broadcast;
use tower_http::cors::CorsLayer;

use crate::error::ApiError;
use crate::hub::{CommandResponse, CreateSession, SessionDescriptor, SessionHub};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    variant: String,
}

pub fn session_router(hub: Arc<SessionHub>) -> Router {
    Router::new()
        .route("/documents", post(register_document))
        .route("/documents/{id}", get(get_document))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/command", post(command))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/overview", get(overview))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/events", get(events))
        .layer(CorsLayer::permissive())
        .with_state(hub)
}

fn json_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn register_document(
    State(hub): State<Arc<SessionHub>>,
    Query(params): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let id = hub.register_document_text(params.get("id").cloned(), text)?;
    Ok(Json(json!({ "document_id": id })))
}

async fn get_document(State(hub): State<Arc<SessionHub>>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let doc = hub.document(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], doc.doc().to_canonical_string()))
}

async fn create_session(State(hub): State<Arc<SessionHub>>, body: Bytes) -> Result<Json<SessionDescriptor>, ApiError> {
    let req: CreateSession = json_body(&body)?;
    hub.create_session(req).map(Json)
}

async fn list_sessions(State(hub): State<Arc<SessionHub>>) -> Json<Vec<SessionDescriptor>> {
    Json(hub.sessions().iter().map(|s| s.descriptor()).collect())
}

async fn command(
    State(hub): State<Arc<SessionHub>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<CommandResponse>, ApiError> {
    // unknown sessions are reported before body problems
    hub.session(&id)?;
    let CommandBody { variant } = json_body(&body)?;
    let command = Command::from_user_variant(&variant)
        .ok_or_else(|| ApiError::BadRequest(format!("unknown command variant {variant:?}")))?;
    hub.command(&id, &command).map(Json)
}

async fn state(State(hub): State<Arc<SessionHub>>, Path(id): Path<String>) -> Result<Json<SessionDescriptor>, ApiError> {
    Ok(Json(hub.session(&id)?.descriptor()))
}

async fn overview(State(hub): State<Arc<SessionHub>>, Path(id): Path<String>) -> Result<Json<OverviewView>, ApiError> {
    Ok(Json(hub.session(&id)?.overview()))
}

async fn log(State(hub): State<Arc<SessionHub>>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let log = hub.session(&id)?.log();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], export_log(&log)))
}

/// `snapshot` first, then one `entry` event per committed log entry. A
/// subscriber that falls too far behind is disconnected and must resubscribe.
async fn events(
    State(hub): State<Arc<SessionHub>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let (snapshot, rx) = hub.session(&id)?.subscribe();
    let first = Event::default()
        .event("snapshot")
        .id(snapshot.last_seq.to_string())
        .json_data(&snapshot)
        .expect("snapshot serializes");
    let rest = stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(entry) => {
                let event = Event::default()
                    .event("entry")
                    .id(entry.seq.to_string())
                    .json_data(&entry)
                    .expect("entry serializes");
                Some((event, rx))
            }
            Err(broadcast::error::RecvError::Lagged(_) | broadcast::error::RecvError::Closed) => None,
        }
    });
    let stream = stream::once(async move { first }).chain(rest).map(Ok);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
