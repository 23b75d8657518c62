//! Scriptable stand-in for a tag-recognizing camera.
//!
//! A script lists moments where a block is shown to the camera. Shows
//! beyond `max_range_cm`, at a bad angle, or lost to the seeded miss draw
//! produce nothing; the rest emit detections at `repeat_hz` for as long as
//! the block stays in view.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nav::LogicalTime;
use crate::relay::{RelayError, RelayStore, SubmitOutcome};

pub const DEFAULT_MAX_RANGE_CM: f64 = 15.0;
pub const DEFAULT_REPEAT_HZ: f64 = 2.0;
pub const DEFAULT_HOLD_MS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShowEvent {
    pub at: LogicalTime,
    pub tag_id: String,
    pub distance_cm: f64,
    pub angle_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizerConfig {
    pub device_id: String,
    pub max_range_cm: f64,
    pub miss_probability: f64,
    pub repeat_hz: f64,
    /// How long a shown block stays in view when the next show does not
    /// replace it sooner.
    pub hold_ms: u64,
    pub seed: u64,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            device_id: "recognizer-1".into(),
            max_range_cm: DEFAULT_MAX_RANGE_CM,
            miss_probability: 0.0,
            repeat_hz: DEFAULT_REPEAT_HZ,
            hold_ms: DEFAULT_HOLD_MS,
            seed: 0,
        }
    }
}

impl RecognizerConfig {
    pub fn check(&self) -> Result<(), RecognizerError> {
        if self.device_id.trim().is_empty() {
            return Err(RecognizerError::InvalidConfig("device_id is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(RecognizerError::InvalidConfig(format!(
                "miss_probability {} outside [0, 1]",
                self.miss_probability
            )));
        }
        if !(self.repeat_hz > 0.0 && self.repeat_hz.is_finite()) {
            return Err(RecognizerError::InvalidConfig(format!(
                "repeat_hz {} must be positive",
                self.repeat_hz
            )));
        }
        if self.max_range_cm.is_nan() || self.max_range_cm < 0.0 {
            return Err(RecognizerError::InvalidConfig("max_range_cm must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecognizerError {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("invalid recognizer config: {0}")]
    InvalidConfig(String),
    #[error("relay unreachable: {0}")]
    RelayUnreachable(String),
    #[error("relay rejected report: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SinkError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("rejected: {0}")]
    Rejected(String),
}

impl From<SinkError> for RecognizerError {
    fn from(e: SinkError) -> Self {
        match e {
            SinkError::Unreachable(m) => RecognizerError::RelayUnreachable(m),
            SinkError::Rejected(m) => RecognizerError::Rejected(m),
        }
    }
}

/// Where detections go: an in-process relay or a remote one.
pub trait DetectionSink {
    fn submit(
        &mut self,
        device_id: &str,
        tag_id: &str,
        detected_at: LogicalTime,
    ) -> Result<SubmitOutcome, SinkError>;
}

impl DetectionSink for &RelayStore {
    fn submit(
        &mut self,
        device_id: &str,
        tag_id: &str,
        detected_at: LogicalTime,
    ) -> Result<SubmitOutcome, SinkError> {
        self.submit_detection(device_id, tag_id, detected_at)
            .map_err(|RelayError::MalformedReport(m)| SinkError::Rejected(m))
    }
}

/// Parse `at_ms<TAB>tag_id<TAB>distance_cm<TAB>angle_ok` lines. Blank lines
/// and lines starting with `#` are ignored.
pub fn parse_script(text: &str) -> Result<Vec<ShowEvent>, RecognizerError> {
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let bad = |what: &str| RecognizerError::InvalidScript(format!("line {}: {what}", n + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        let [at, tag, distance, angle] = fields[..] else {
            return Err(bad("expected 4 tab-separated fields"));
        };
        let at = u64::from_str(at.trim()).map_err(|_| bad("at_ms is not an integer"))?;
        let distance_cm = f64::from_str(distance.trim()).map_err(|_| bad("distance_cm is not a number"))?;
        if distance_cm.is_nan() || distance_cm < 0.0 {
            return Err(bad("distance_cm must be >= 0"));
        }
        let angle_ok = match angle.trim() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            _ => return Err(bad("angle_ok must be true or false")),
        };
        let tag_id = tag.trim();
        if tag_id.is_empty() {
            return Err(bad("tag_id is empty"));
        }
        events.push(ShowEvent {
            at,
            tag_id: tag_id.to_string(),
            distance_cm,
            angle_ok,
        });
    }
    Ok(events)
}

pub fn format_script(events: &[ShowEvent]) -> String {
    events
        .iter()
        .map(|e| format!("{}\t{}\t{}\t{}\n", e.at, e.tag_id, e.distance_cm, e.angle_ok))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedSubmission {
    pub show_index: usize,
    pub tag_id: String,
    pub detected_at: LogicalTime,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SubmissionReport {
    pub shows: usize,
    pub out_of_range: usize,
    pub bad_angle: usize,
    pub missed: usize,
    pub submitted: usize,
    pub stored: usize,
    pub deduplicated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmittedDetection {
    pub tag_id: String,
    pub detected_at: LogicalTime,
    pub outcome: SubmitOutcome,
}

/// Deterministic list of detections the script produces, plus the counts
/// of shows filtered out. One miss draw is taken per show whether or not
/// the show is in range, so changing the range never shifts later draws.
pub fn plan_submissions(
    script: &[ShowEvent],
    config: &RecognizerConfig,
) -> Result<(Vec<PlannedSubmission>, SubmissionReport), RecognizerError> {
    config.check()?;
    if let Some(w) = script.windows(2).find(|w| w[1].at < w[0].at) {
        return Err(RecognizerError::InvalidScript(format!(
            "timestamps decrease ({} after {})",
            w[1].at, w[0].at
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let period_ms = 1_000.0 / config.repeat_hz;
    let mut report = SubmissionReport {
        shows: script.len(),
        ..SubmissionReport::default()
    };
    let mut plan = Vec::new();
    for (i, show) in script.iter().enumerate() {
        let draw: f64 = rng.random();
        if show.distance_cm > config.max_range_cm {
            report.out_of_range += 1;
            continue;
        }
        if !show.angle_ok {
            report.bad_angle += 1;
            continue;
        }
        if draw < config.miss_probability {
            report.missed += 1;
            continue;
        }
        let visible_ms = script
            .get(i + 1)
            .map_or(config.hold_ms, |next| (next.at - show.at).min(config.hold_ms));
        let mut k = 0u64;
        loop {
            let offset = (k as f64 * period_ms).round() as u64;
            if k > 0 && offset >= visible_ms {
                break;
            }
            plan.push(PlannedSubmission {
                show_index: i,
                tag_id: show.tag_id.clone(),
                detected_at: show.at + offset,
            });
            k += 1;
        }
    }
    report.submitted = plan.len();
    Ok((plan, report))
}

pub fn run_script<S: DetectionSink>(
    script: &[ShowEvent],
    config: &RecognizerConfig,
    sink: &mut S,
) -> Result<(Vec<SubmittedDetection>, SubmissionReport), RecognizerError> {
    let (plan, mut report) = plan_submissions(script, config)?;
    let mut submitted = Vec::with_capacity(plan.len());
    for p in plan {
        let outcome = sink.submit(&config.device_id, &p.tag_id, p.detected_at)?;
        match outcome {
            SubmitOutcome::Stored { .. } => report.stored += 1,
            SubmitOutcome::Deduplicated { .. } => report.deduplicated += 1,
        }
        submitted.push(SubmittedDetection {
            tag_id: p.tag_id,
            detected_at: p.detected_at,
            outcome,
        });
    }
    Ok((submitted, report))
}

/// One detection at distance 0 with a good angle, bypassing the failure
/// model. The relay does not know the document, so any tag is submitted.
pub fn interactive_show<S: DetectionSink>(
    tag_id: &str,
    config: &RecognizerConfig,
    sink: &mut S,
    at: LogicalTime,
) -> Result<SubmitOutcome, RecognizerError> {
    config.check()?;
    Ok(sink.submit(&config.device_id, tag_id, at)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn show(at: u64, tag: &str, distance_cm: f64) -> ShowEvent {
        ShowEvent {
            at,
            tag_id: tag.into(),
            distance_cm,
            angle_ok: true,
        }
    }

    #[test]
    fn in_range_show_is_detected() {
        let relay = RelayStore::default();
        let (subs, report) = run_script(&[show(0, "A", 10.0)], &RecognizerConfig::default(), &mut &relay).unwrap();
        assert!(!subs.is_empty());
        assert!(subs.iter().all(|s| s.tag_id == "A"));
        // held for 1 s at 2 Hz: 0 ms and 500 ms, the second collapses in the relay
        assert_eq!(report.submitted, 2);
        assert_eq!((report.stored, report.deduplicated), (1, 1));
    }

    #[test]
    fn out_of_range_show_is_dropped() {
        let (plan, report) = plan_submissions(&[show(0, "A", 20.0)], &RecognizerConfig::default()).unwrap();
        assert!(plan.is_empty());
        assert_eq!(report.out_of_range, 1);
        let (plan, _) = plan_submissions(&[show(0, "A", 15.0)], &RecognizerConfig::default()).unwrap();
        assert!(!plan.is_empty(), "15 cm is still in range");
    }

    #[test]
    fn certain_miss_drops_everything() {
        let config = RecognizerConfig {
            miss_probability: 1.0,
            ..RecognizerConfig::default()
        };
        let script: Vec<_> = (0..50).map(|i| show(i * 100, "A", 1.0)).collect();
        let (plan, report) = plan_submissions(&script, &config).unwrap();
        assert!(plan.is_empty());
        assert_eq!(report.missed, 50);
    }

    #[test]
    fn bad_angle_and_schedule() {
        let mut s = vec![show(0, "A", 1.0), show(300, "B", 1.0), show(300, "C", 1.0)];
        s[1].angle_ok = false;
        let (plan, report) = plan_submissions(&s, &RecognizerConfig::default()).unwrap();
        assert_eq!(report.bad_angle, 1);
        let at: Vec<(String, u64)> = plan.iter().map(|p| (p.tag_id.clone(), p.detected_at)).collect();
        assert_eq!(
            at,
            vec![("A".into(), 0), ("C".into(), 300), ("C".into(), 800)]
        );
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let err = plan_submissions(&[show(5, "A", 1.0), show(4, "B", 1.0)], &RecognizerConfig::default());
        assert!(matches!(err, Err(RecognizerError::InvalidScript(_))));
        let bad = RecognizerConfig {
            repeat_hz: 0.0,
            ..RecognizerConfig::default()
        };
        assert!(matches!(plan_submissions(&[], &bad), Err(RecognizerError::InvalidConfig(_))));
    }

    #[test]
    fn script_file_format() {
        let text = "# demo\n0\tA\t10\ttrue\n\n1500\tB7\t16.5\tfalse\n";
        let events = parse_script(text).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1], ShowEvent { at: 1500, tag_id: "B7".into(), distance_cm: 16.5, angle_ok: false });
        assert_eq!(parse_script(&format_script(&events)).unwrap(), events);
        assert!(parse_script("0\tA\t10").is_err());
        assert!(parse_script("0\tA\t-1\ttrue").is_err());
    }

    #[test]
    fn interactive_shows() {
        let relay = RelayStore::default();
        let cfg = RecognizerConfig::default();
        let first = interactive_show("B7", &cfg, &mut &relay, 1_000).unwrap();
        assert_eq!(first.seq(), Some(1));
        assert!(interactive_show("B7", &cfg, &mut &relay, 1_200).unwrap().is_deduplicated());
        assert!(interactive_show("not-in-any-doc", &cfg, &mut &relay, 1_200).unwrap().seq().is_some());
    }

    struct Down;
    impl DetectionSink for Down {
        fn submit(&mut self, _: &str, _: &str, _: LogicalTime) -> Result<SubmitOutcome, SinkError> {
            Err(SinkError::Unreachable("connection refused".into()))
        }
    }

    #[test]
    fn unreachable_relay() {
        let err = run_script(&[show(0, "A", 1.0)], &RecognizerConfig::default(), &mut Down).unwrap_err();
        assert!(matches!(err, RecognizerError::RelayUnreachable(_)));
    }
}
