//! Injected time sources. Engine code never reads the wall clock directly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::nav::LogicalTime;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> LogicalTime;
}

/// Milliseconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> LogicalTime {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn new(start: LogicalTime) -> Self {
        ManualClock {
            now: AtomicU64::new(start),
        }
    }

    pub fn set(&self, t: LogicalTime) {
        self.now.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) -> LogicalTime {
        self.now.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> LogicalTime {
        self.now.load(Ordering::SeqCst)
    }
}
