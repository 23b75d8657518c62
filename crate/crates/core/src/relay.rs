//! In-memory detection relay.
//!
//! Recognizer devices submit detections; consumers poll with their own
//! cursor and receive every stored detection exactly once, in arrival
//! order. Bursts of the same tag from the same device collapse within the
//! dedupe window. All state sits behind one mutex, so submit, fetch and
//! purge are each atomic.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::detection::TagDetection;
use crate::nav::LogicalTime;

pub const DEFAULT_DEDUPE_WINDOW_MS: u64 = 750;
pub const DEFAULT_POLL_INTERVAL_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelayConfig {
    pub dedupe_window_ms: u64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            dedupe_window_ms: DEFAULT_DEDUPE_WINDOW_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmitOutcome {
    Stored { seq: u64 },
    Deduplicated { deduplicated: bool },
}

impl SubmitOutcome {
    pub fn seq(self) -> Option<u64> {
        match self {
            SubmitOutcome::Stored { seq } => Some(seq),
            SubmitOutcome::Deduplicated { .. } => None,
        }
    }

    pub fn is_deduplicated(self) -> bool {
        matches!(self, SubmitOutcome::Deduplicated { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerCursor {
    pub last_delivered_seq: u64,
}

#[derive(Default)]
struct Inner {
    next_seq: u64,
    queue: VecDeque<TagDetection>,
    /// detected_at of the last stored detection per (device, tag)
    last_stored: HashMap<(String, String), LogicalTime>,
    cursors: HashMap<String, u64>,
}

pub struct RelayStore {
    config: RelayConfig,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl Default for RelayStore {
    fn default() -> Self {
        RelayStore::new(RelayConfig::default(), Arc::new(SystemClock))
    }
}

impl RelayStore {
    pub fn new(config: RelayConfig, clock: Arc<dyn Clock>) -> Self {
        RelayStore {
            config,
            clock,
            inner: Mutex::new(Inner {
                next_seq: 1,
                ..Inner::default()
            }),
        }
    }

    pub fn config(&self) -> RelayConfig {
        self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn submit_detection(
        &self,
        device_id: &str,
        tag_id: &str,
        detected_at: LogicalTime,
    ) -> Result<SubmitOutcome, RelayError> {
        if device_id.trim().is_empty() {
            return Err(RelayError::MalformedReport("device_id is empty".into()));
        }
        if tag_id.trim().is_empty() {
            return Err(RelayError::MalformedReport("tag_id is empty".into()));
        }
        let mut inner = self.lock();
        let key = (device_id.to_string(), tag_id.to_string());
        if let Some(&prev) = inner.last_stored.get(&key) {
            if prev.abs_diff(detected_at) < self.config.dedupe_window_ms {
                return Ok(SubmitOutcome::Deduplicated { deduplicated: true });
            }
        }
        let seq = inner.next_seq;
        inner.next_seq += 1;
        inner.last_stored.insert(key, detected_at);
        inner.queue.push_back(TagDetection {
            device_id: device_id.to_string(),
            tag_id: tag_id.to_string(),
            detected_at,
            seq,
        });
        Ok(SubmitOutcome::Stored { seq })
    }

    /// Everything stored after the consumer's cursor, ascending by seq.
    /// Unknown consumers start at cursor 0.
    pub fn fetch_new(&self, consumer_id: &str) -> Vec<TagDetection> {
        let mut inner = self.lock();
        let cursor = *inner.cursors.entry(consumer_id.to_string()).or_insert(0);
        let start = inner.queue.partition_point(|d| d.seq <= cursor);
        let out: Vec<TagDetection> = inner.queue.range(start..).cloned().collect();
        if let Some(last) = out.last() {
            inner.cursors.insert(consumer_id.to_string(), last.seq);
        }
        out
    }

    pub fn cursor(&self, consumer_id: &str) -> Option<ConsumerCursor> {
        self.lock()
            .cursors
            .get(consumer_id)
            .map(|&last_delivered_seq| ConsumerCursor { last_delivered_seq })
    }

    /// Remove detections older than `now - age_ms` that every known consumer
    /// has already received. With no known consumers nothing counts as
    /// delivered, so nothing is removed.
    pub fn purge_older_than(&self, age_ms: u64) -> usize {
        let cutoff = self.clock.now_ms().saturating_sub(age_ms);
        let mut inner = self.lock();
        let Some(delivered) = inner.cursors.values().copied().min() else {
            return 0;
        };
        let before = inner.queue.len();
        inner
            .queue
            .retain(|d| !(d.detected_at < cutoff && d.seq <= delivered));
        let window = self.config.dedupe_window_ms;
        inner
            .last_stored
            .retain(|_, &mut t| t.saturating_add(window) >= cutoff);
        before - inner.queue.len()
    }

    pub fn stored_len(&self) -> usize {
        self.lock().queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn store() -> (RelayStore, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new(0));
        (RelayStore::new(RelayConfig::default(), clock.clone()), clock)
    }

    #[test]
    fn first_report_gets_seq_one() {
        let (relay, _) = store();
        assert_eq!(
            relay.submit_detection("d1", "A", 0),
            Ok(SubmitOutcome::Stored { seq: 1 })
        );
    }

    #[test]
    fn bursts_collapse_per_device() {
        let (relay, _) = store();
        let outcomes: Vec<_> = [0, 150, 300, 450, 600]
            .iter()
            .map(|&t| relay.submit_detection("d1", "A", t).unwrap())
            .collect();
        assert_eq!(outcomes.iter().filter(|o| o.is_deduplicated()).count(), 4);
        assert_eq!(relay.stored_len(), 1);
        assert!(relay.submit_detection("d2", "A", 10).unwrap().seq().is_some());
        assert!(relay.submit_detection("d1", "B", 10).unwrap().seq().is_some());
        // window is measured from the last stored report
        assert!(relay.submit_detection("d1", "A", 750).unwrap().seq().is_some());
    }

    #[test]
    fn malformed_reports() {
        let (relay, _) = store();
        assert!(relay.submit_detection("", "A", 0).is_err());
        assert!(relay.submit_detection("d", " ", 0).is_err());
    }

    #[test]
    fn consumers_have_independent_cursors() {
        let (relay, _) = store();
        for (i, tag) in ["A", "B", "C"].iter().enumerate() {
            relay.submit_detection("d1", tag, i as u64).unwrap();
        }
        let seqs = |v: Vec<TagDetection>| v.iter().map(|d| d.seq).collect::<Vec<_>>();
        assert_eq!(seqs(relay.fetch_new("p1")), vec![1, 2, 3]);
        assert!(relay.fetch_new("p1").is_empty());
        assert_eq!(seqs(relay.fetch_new("p2")), vec![1, 2, 3]);
        relay.submit_detection("d1", "D", 5).unwrap();
        assert_eq!(seqs(relay.fetch_new("p1")), vec![4]);
        assert_eq!(relay.cursor("p1").unwrap().last_delivered_seq, 4);
    }

    #[test]
    fn purge_rules() {
        let (relay, clock) = store();
        relay.submit_detection("d1", "A", 0).unwrap();
        relay.submit_detection("d1", "B", 100).unwrap();
        relay.fetch_new("p1");
        clock.set(1_000);
        assert_eq!(relay.purge_older_than(5_000), 0, "nothing expired");

        relay.fetch_new("p2");
        relay.submit_detection("d1", "C", 200).unwrap();
        clock.set(10_000);
        // C is expired but undelivered
        assert_eq!(relay.purge_older_than(1_000), 2);
        assert_eq!(relay.stored_len(), 1);
        relay.fetch_new("p1");
        relay.fetch_new("p2");
        assert_eq!(relay.purge_older_than(1_000), 1);
        assert_eq!(relay.cursor("p1").unwrap().last_delivered_seq, 3);
        assert!(relay.fetch_new("p1").is_empty());
    }

    #[test]
    fn outcome_wire_shape() {
        assert_eq!(
            serde_json::to_string(&SubmitOutcome::Stored { seq: 4 }).unwrap(),
            r#"{"seq":4}"#
        );
        assert_eq!(
            serde_json::to_string(&SubmitOutcome::Deduplicated { deduplicated: true }).unwrap(),
            r#"{"deduplicated":true}"#
        );
    }
}
