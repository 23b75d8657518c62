use stepnav_core::clock::Clock;
use stepnav_core::nav::LogicalTime;
use tokio::time::Instant;

/// Milliseconds since construction on the tokio clock, so a paused test
/// runtime controls it.
#[derive(Debug, Clone, Copy)]
pub struct TokioClock {
    origin: Instant,
    offset: LogicalTime,
}

impl TokioClock {
    pub fn new(offset: LogicalTime) -> Self {
        TokioClock { origin: Instant::now(), offset }
    }
}

impl Clock for TokioClock {
    fn now_ms(&self) -> LogicalTime {
        self.offset + self.origin.elapsed().as_millis() as u64
    }
}
