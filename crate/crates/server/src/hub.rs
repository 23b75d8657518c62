//! Live navigation sessions shared by the HTTP handlers and the pump.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use stepnav_core::clock::Clock;
use stepnav_core::detection::TagDetection;
use stepnav_core::model::{parse_document, InstructionDocument};
use stepnav_core::nav::{
    Arm, Command, IndexedDocument, LogicalTime, NavConfig, NavError, NavState, OverviewView,
    SessionLogEntry, TriggerMode, DEFAULT_ARM_WINDOW_MS,
};
use tokio::sync::broadcast;

use crate::error::ApiError;

const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub document_id: String,
    pub title: String,
    pub trigger_mode: TriggerMode,
    pub created_at: LogicalTime,
    pub current_step: u32,
    pub total_steps: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub document_id: String,
    #[serde(default)]
    pub trigger_mode: Option<TriggerMode>,
    /// Devices feeding this session; absent means every device.
    #[serde(default)]
    pub devices: Option<Vec<String>>,
    #[serde(default)]
    pub arm_window_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandResponse {
    pub descriptor: SessionDescriptor,
    pub echo: SessionLogEntry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overview: Option<OverviewView>,
}

/// State at subscription time. Stream events continue from `last_seq + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub descriptor: SessionDescriptor,
    pub last_seq: u64,
    pub return_anchor: Option<u32>,
    pub visited: BTreeSet<u32>,
    pub arm: Option<Arm>,
}

pub struct Session {
    id: String,
    document_id: String,
    created_at: LogicalTime,
    devices: Option<BTreeSet<String>>,
    inner: Mutex<SessionInner>,
    events: broadcast::Sender<SessionLogEntry>,
}

struct SessionInner {
    nav: NavState,
    /// Highest relay seq applied; older detections are never re-applied.
    last_relay_seq: u64,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, SessionInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn routes(&self, device_id: &str) -> bool {
        self.devices.as_ref().is_none_or(|d| d.contains(device_id))
    }

    fn descriptor_of(&self, nav: &NavState) -> SessionDescriptor {
        SessionDescriptor {
            session_id: self.id.clone(),
            document_id: self.document_id.clone(),
            title: nav.document().doc().title.clone(),
            trigger_mode: nav.trigger_mode(),
            created_at: self.created_at,
            current_step: nav.current_step(),
            total_steps: nav.total_steps(),
        }
    }

    pub fn descriptor(&self) -> SessionDescriptor {
        self.descriptor_of(&self.lock().nav)
    }

    pub fn log(&self) -> Vec<SessionLogEntry> {
        self.lock().nav.log().to_vec()
    }

    pub fn overview(&self) -> OverviewView {
        self.lock().nav.overview_view()
    }

    /// Snapshot and receiver are taken under the session lock, so the
    /// receiver sees exactly the entries after `last_seq`.
    pub fn subscribe(&self) -> (Snapshot, broadcast::Receiver<SessionLogEntry>) {
        let inner = self.lock();
        let nav = &inner.nav;
        let snapshot = Snapshot {
            descriptor: self.descriptor_of(nav),
            last_seq: nav.last_entry().seq,
            return_anchor: nav.return_anchor(),
            visited: nav.visited().clone(),
            arm: nav.arm(),
        };
        (snapshot, self.events.subscribe())
    }

    fn command(&self, command: &Command, at: LogicalTime) -> Result<CommandResponse, NavError> {
        let mut inner = self.lock();
        let overview = match command {
            Command::Overview => Some(inner.nav.overview(at)),
            other => {
                inner.nav.apply(other, at)?;
                None
            }
        };
        let echo = inner.nav.last_entry().clone();
        let _ = self.events.send(echo.clone());
        Ok(CommandResponse {
            descriptor: self.descriptor_of(&inner.nav),
            echo,
            overview,
        })
    }

    fn deliver(&self, detection: &TagDetection, at: LogicalTime) -> bool {
        let mut inner = self.lock();
        if detection.seq <= inner.last_relay_seq {
            return false;
        }
        inner.last_relay_seq = detection.seq;
        let entry = inner.nav.on_detection(detection, at).clone();
        let _ = self.events.send(entry);
        true
    }
}

/// Applied to session requests that leave a field out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionDefaults {
    pub trigger_mode: TriggerMode,
    pub arm_window_ms: u64,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        SessionDefaults {
            trigger_mode: TriggerMode::VoiceArmed,
            arm_window_ms: DEFAULT_ARM_WINDOW_MS,
        }
    }
}

pub struct SessionHub {
    clock: Arc<dyn Clock>,
    defaults: SessionDefaults,
    documents: RwLock<BTreeMap<String, Arc<IndexedDocument>>>,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
    next_document: AtomicU64,
    next_session: AtomicU64,
}

impl SessionHub {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        SessionHub::with_defaults(clock, SessionDefaults::default())
    }

    pub fn with_defaults(clock: Arc<dyn Clock>, defaults: SessionDefaults) -> Self {
        SessionHub {
            clock,
            defaults,
            documents: RwLock::default(),
            sessions: RwLock::default(),
            next_document: AtomicU64::new(1),
            next_session: AtomicU64::new(1),
        }
    }

    pub fn now(&self) -> LogicalTime {
        self.clock.now_ms()
    }

    pub fn register_document(&self, id: Option<String>, doc: InstructionDocument) -> Result<String, ApiError> {
        let indexed = IndexedDocument::new(doc).map_err(|e| ApiError::InvalidDocument(e.to_string()))?;
        let mut docs = self.documents.write().unwrap_or_else(|e| e.into_inner());
        let id = match id {
            Some(id) if id.trim().is_empty() => return Err(ApiError::BadRequest("document id is empty".into())),
            Some(id) if docs.contains_key(&id) => return Err(ApiError::DocumentExists(id)),
            Some(id) => id,
            None => loop {
                let candidate = format!("doc-{}", self.next_document.fetch_add(1, Ordering::Relaxed));
                if !docs.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        docs.insert(id.clone(), Arc::new(indexed));
        Ok(id)
    }

    pub fn register_document_text(&self, id: Option<String>, text: &str) -> Result<String, ApiError> {
        let doc = parse_document(text).map_err(|e| ApiError::InvalidDocument(e.to_string()))?;
        self.register_document(id, doc)
    }

    pub fn document(&self, id: &str) -> Result<Arc<IndexedDocument>, ApiError> {
        self.documents
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownDocument(id.to_string()))
    }

    pub fn create_session(&self, req: CreateSession) -> Result<SessionDescriptor, ApiError> {
        let doc = self.document(&req.document_id)?;
        let config = NavConfig {
            trigger_mode: req.trigger_mode.unwrap_or(self.defaults.trigger_mode),
            arm_window_ms: req.arm_window_ms.unwrap_or(self.defaults.arm_window_ms),
        };
        let id = format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed));
        let at = self.now();
        let nav = NavState::create(id.clone(), doc, config, None, at)
            .map_err(|e| ApiError::InvalidDocument(e.to_string()))?;
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let session = Arc::new(Session {
            id: id.clone(),
            document_id: req.document_id,
            created_at: at,
            devices: req.devices.map(|d| d.into_iter().collect()),
            inner: Mutex::new(SessionInner { nav, last_relay_seq: 0 }),
            events,
        });
        let descriptor = session.descriptor();
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, session);
        Ok(descriptor)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    pub fn sessions(&self) -> Vec<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect()
    }

    pub fn command(&self, session_id: &str, command: &Command) -> Result<CommandResponse, ApiError> {
        let session = self.session(session_id)?;
        session.command(command, self.now()).map_err(|e| match e {
            NavError::WrongTriggerMode => ApiError::WrongTriggerMode(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        })
    }

    /// Apply each detection, in the given order, to every session routed to
    /// its device. Returns the number of (session, detection) applications.
    pub fn deliver(&self, detections: &[TagDetection]) -> usize {
        if detections.is_empty() {
            return 0;
        }
        let sessions = self.sessions();
        let at = self.now();
        let mut applied = 0;
        for d in detections {
            for s in sessions.iter().filter(|s| s.routes(&d.device_id)) {
                applied += usize::from(s.deliver(d, at));
            }
        }
        applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepnav_core::clock::ManualClock;
    use stepnav_core::nav::{Classification, notes};

    const DOC: &str = r#"{
        "title": "three", "format_version": 1, "tag_mode": "strict",
        "catalog": [{"tag_id": "A", "label": "", "color": "", "asymmetric": false},
                    {"tag_id": "B", "label": "", "color": "", "asymmetric": false},
                    {"tag_id": "C", "label": "", "color": "", "asymmetric": false}],
        "steps": [
            {"index": 1, "kind": "assembly", "blocks_introduced": ["A"], "caption": ""},
            {"index": 2, "kind": "assembly", "blocks_introduced": ["C"], "caption": ""},
            {"index": 3, "kind": "assembly", "blocks_introduced": ["B"], "caption": ""}
        ],
        "subparts": []
    }"#;

    fn hub() -> SessionHub {
        let hub = SessionHub::new(Arc::new(ManualClock::new(100)));
        hub.register_document_text(Some("d".into()), DOC).unwrap();
        hub
    }

    fn create(hub: &SessionHub, mode: TriggerMode, devices: Option<Vec<String>>) -> String {
        hub.create_session(CreateSession { document_id: "d".into(), trigger_mode: Some(mode), devices, arm_window_ms: None })
            .unwrap()
            .session_id
    }

    fn det(device: &str, tag: &str, seq: u64) -> TagDetection {
        TagDetection { device_id: device.into(), tag_id: tag.into(), detected_at: 100, seq }
    }

    #[test]
    fn documents_and_sessions() {
        let hub = hub();
        assert!(matches!(hub.register_document_text(Some("d".into()), DOC), Err(ApiError::DocumentExists(_))));
        assert!(matches!(hub.register_document_text(None, "{"), Err(ApiError::InvalidDocument(_))));
        assert_eq!(hub.register_document_text(None, DOC).unwrap(), "doc-1");
        let a = create(&hub, TriggerMode::VoiceArmed, None);
        let b = create(&hub, TriggerMode::VoiceArmed, None);
        assert_ne!(a, b);
        let missing = hub.create_session(CreateSession {
            document_id: "nope".into(),
            trigger_mode: None,
            devices: None,
            arm_window_ms: None,
        });
        assert!(matches!(missing, Err(ApiError::UnknownDocument(_))));
        assert_eq!(hub.session(&a).unwrap().descriptor().total_steps, 3);
    }

    #[test]
    fn commands_and_errors() {
        let hub = hub();
        let s = create(&hub, TriggerMode::DetectionTriggered, None);
        let r = hub.command(&s, &Command::Next).unwrap();
        assert_eq!((r.descriptor.current_step, r.echo.seq), (2, 2));
        assert!(matches!(hub.command(&s, &Command::ThisOne), Err(ApiError::WrongTriggerMode(_))));
        assert!(hub.command(&s, &Command::GoingBack).unwrap().echo.has_note(notes::NO_ANCHOR));
        let r = hub.command(&s, &Command::Overview).unwrap();
        assert_eq!(r.overview.unwrap().current_step, 2);
        assert!(matches!(hub.command("zzz", &Command::Next), Err(ApiError::UnknownSession(_))));
    }

    #[test]
    fn delivery_is_routed_and_exactly_once() {
        let hub = hub();
        let all = create(&hub, TriggerMode::DetectionTriggered, None);
        let only_d2 = create(&hub, TriggerMode::DetectionTriggered, Some(vec!["d2".into()]));
        assert_eq!(hub.deliver(&[det("d1", "B", 1)]), 1);
        assert_eq!(hub.deliver(&[det("d1", "B", 1), det("d2", "A", 2)]), 2);
        let log = hub.session(&all).unwrap().log();
        let seqs: Vec<u64> = log
            .iter()
            .filter_map(|e| match &e.command {
                Command::TagDetected { relay_seq, .. } => Some(*relay_seq),
                _ => None,
            })
            .collect();
        assert_eq!(seqs, vec![1, 2]);
        assert_eq!(hub.session(&all).unwrap().descriptor().current_step, 1);
        let d2 = hub.session(&only_d2).unwrap().log();
        assert_eq!(d2.len(), 2);
        assert_eq!(d2[1].classification, Classification::Noop);
    }

    #[test]
    fn subscription_sees_entries_after_snapshot() {
        let hub = hub();
        let s = create(&hub, TriggerMode::VoiceArmed, None);
        hub.command(&s, &Command::Next).unwrap();
        let (snap, mut rx) = hub.session(&s).unwrap().subscribe();
        assert_eq!((snap.last_seq, snap.descriptor.current_step), (2, 2));
        hub.command(&s, &Command::ThisOne).unwrap();
        hub.deliver(&[det("d", "B", 7)]);
        assert_eq!(rx.try_recv().unwrap().seq, 3);
        let jump = rx.try_recv().unwrap();
        assert_eq!((jump.seq, jump.to_step), (4, 3));
        assert!(rx.try_recv().is_err());
    }
}
