//! Session state machine for blended linear and non-linear navigation.
//!
//! A session moves through the steps of one document. Linear moves
//! (`Next`/`Previous`) clamp at the ends, a tag detection jumps to the step
//! that introduces the shown block, and `GoingBack` undoes the most recent
//! jump. Every operation appends exactly one [`SessionLogEntry`]; the log is
//! enough to rebuild the state (see [`replay`]).
//!
//! Time is logical: callers pass the timestamp of every operation.

mod log;
mod replay;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::log::{
    export_log, notes, parse_log, Classification, Command, LogParseError, SessionLogEntry,
};
pub use self::replay::{replay, ReplayError};

use crate::detection::TagDetection;
use crate::index::BlockIndex;
use crate::model::{check_document, DocumentError, InstructionDocument};

/// Milliseconds on an injected clock.
pub type LogicalTime = u64;

pub const DEFAULT_ARM_WINDOW_MS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// A detection only jumps after `ThisOne` armed the session.
    #[default]
    VoiceArmed,
    /// Every detection jumps.
    DetectionTriggered,
}

impl std::str::FromStr for TriggerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "voice_armed" => Ok(TriggerMode::VoiceArmed),
            "detection_triggered" => Ok(TriggerMode::DetectionTriggered),
            other => Err(format!("unknown trigger mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavConfig {
    pub trigger_mode: TriggerMode,
    pub arm_window_ms: u64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            trigger_mode: TriggerMode::VoiceArmed,
            arm_window_ms: DEFAULT_ARM_WINDOW_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub armed_at: LogicalTime,
    pub expires_at: LogicalTime,
}

/// A validated document together with its block index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDocument {
    doc: InstructionDocument,
    index: BlockIndex,
}

impl IndexedDocument {
    pub fn new(doc: InstructionDocument) -> Result<Self, DocumentError> {
        check_document(&doc)?;
        let index = BlockIndex::build(&doc);
        Ok(IndexedDocument { doc, index })
    }

    pub fn doc(&self) -> &InstructionDocument {
        &self.doc
    }

    pub fn index(&self) -> &BlockIndex {
        &self.index
    }

    pub fn total_steps(&self) -> u32 {
        self.doc.total_steps()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NavError {
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("command requires the voice_armed trigger mode")]
    WrongTriggerMode,
    #[error("command {0} cannot be applied to a live session")]
    NotApplicable(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tag {0:?} is not introduced by any assembly step")]
pub struct UnknownTag(pub String);

/// Target step for a shown tag: the candidate nearest to `current_step`,
/// ties going to the later step.
pub fn resolve_jump(current_step: u32, tag: &str, index: &BlockIndex) -> Result<u32, UnknownTag> {
    let candidates = index
        .steps_for(tag)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| UnknownTag(tag.to_string()))?;
    // candidates are ascending, so the last minimum is the larger index
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.abs_diff(current_step) <= best.abs_diff(current_step) {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverviewView {
    pub current_step: u32,
    pub total_steps: u32,
    pub subpart_path: Vec<String>,
    pub visited: BTreeSet<u32>,
}

#[derive(Debug, Clone)]
pub struct NavState {
    session_id: String,
    doc: Arc<IndexedDocument>,
    config: NavConfig,
    current_step: u32,
    return_anchor: Option<u32>,
    arm: Option<Arm>,
    visited: BTreeSet<u32>,
    log: Vec<SessionLogEntry>,
    rng_seed: Option<u64>,
}

impl NavState {
    /// Start a session at step 1. The log starts with a single meta
    /// `session_start` entry.
    pub fn create(
        session_id: impl Into<String>,
        doc: Arc<IndexedDocument>,
        config: NavConfig,
        rng_seed: Option<u64>,
        at: LogicalTime,
    ) -> Result<Self, NavError> {
        if doc.total_steps() == 0 {
            return Err(NavError::InvalidDocument("document has no steps".into()));
        }
        let mut state = NavState {
            session_id: session_id.into(),
            doc,
            config,
            current_step: 1,
            return_anchor: None,
            arm: None,
            visited: BTreeSet::from([1]),
            log: Vec::new(),
            rng_seed,
        };
        state.record(
            at,
            Command::Start {
                trigger_mode: config.trigger_mode,
                arm_window_ms: config.arm_window_ms,
            },
            1,
            Classification::Meta,
            Some(notes::SESSION_START),
        );
        Ok(state)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn document(&self) -> &Arc<IndexedDocument> {
        &self.doc
    }

    pub fn config(&self) -> NavConfig {
        self.config
    }

    pub fn trigger_mode(&self) -> TriggerMode {
        self.config.trigger_mode
    }

    pub fn current_step(&self) -> u32 {
        self.current_step
    }

    pub fn total_steps(&self) -> u32 {
        self.doc.total_steps()
    }

    pub fn return_anchor(&self) -> Option<u32> {
        self.return_anchor
    }

    pub fn arm(&self) -> Option<Arm> {
        self.arm
    }

    /// Armed and not yet expired at `now`.
    pub fn is_armed_at(&self, now: LogicalTime) -> bool {
        self.arm.is_some_and(|a| now <= a.expires_at)
    }

    pub fn visited(&self) -> &BTreeSet<u32> {
        &self.visited
    }

    pub fn log(&self) -> &[SessionLogEntry] {
        &self.log
    }

    pub fn last_entry(&self) -> &SessionLogEntry {
        self.log.last().expect("log always holds the start entry")
    }

    pub fn rng_seed(&self) -> Option<u64> {
        self.rng_seed
    }

    pub fn apply_linear(&mut self, direction: Direction, at: LogicalTime) -> &SessionLogEntry {
        let from = self.current_step;
        let (command, to) = match direction {
            Direction::Forward => (Command::Next, (from + 1).min(self.total_steps())),
            Direction::Backward => (Command::Previous, from.saturating_sub(1).max(1)),
        };
        if to == from {
            return self.record(at, command, from, Classification::Noop, Some(notes::BOUNDARY));
        }
        self.current_step = to;
        self.record(at, command, to, Classification::Linear, None)
    }

    pub fn arm_this_one(&mut self, at: LogicalTime) -> Result<&SessionLogEntry, NavError> {
        if self.config.trigger_mode != TriggerMode::VoiceArmed {
            return Err(NavError::WrongTriggerMode);
        }
        self.arm = Some(Arm {
            armed_at: at,
            expires_at: at.saturating_add(self.config.arm_window_ms),
        });
        let step = self.current_step;
        Ok(self.record(at, Command::ThisOne, step, Classification::Meta, Some(notes::ARMED)))
    }

    pub fn on_detection(&mut self, detection: &TagDetection, at: LogicalTime) -> &SessionLogEntry {
        let command = Command::TagDetected {
            tag_id: detection.tag_id.clone(),
            device_id: detection.device_id.clone(),
            detected_at: detection.detected_at,
            relay_seq: detection.seq,
        };
        let from = self.current_step;
        if self.config.trigger_mode == TriggerMode::VoiceArmed {
            match self.arm {
                None => {
                    return self.record(at, command, from, Classification::Noop, Some(notes::UNSOLICITED))
                }
                Some(arm) if detection.detected_at > arm.expires_at => {
                    self.arm = None;
                    return self.record(at, command, from, Classification::Noop, Some(notes::ARM_TIMEOUT));
                }
                Some(_) => {}
            }
        }
        let target = match resolve_jump(from, &detection.tag_id, self.doc.index()) {
            Ok(t) => t,
            // an unrecognised block leaves the arm in place so it can be re-presented
            Err(_) => return self.record(at, command, from, Classification::Noop, Some(notes::UNKNOWN_TAG)),
        };
        self.arm = None;
        if target == from {
            return self.record(at, command, from, Classification::Noop, Some(notes::ALREADY_HERE));
        }
        let ambiguous = self
            .doc
            .index()
            .steps_for(&detection.tag_id)
            .is_some_and(|c| c.len() > 1);
        self.return_anchor = Some(from);
        self.current_step = target;
        self.record(
            at,
            command,
            target,
            Classification::Nonlinear,
            ambiguous.then_some(notes::AMBIGUOUS),
        )
    }

    pub fn going_back(&mut self, at: LogicalTime) -> &SessionLogEntry {
        let from = self.current_step;
        match self.return_anchor.take() {
            Some(anchor) if anchor == from => {
                self.record(at, Command::GoingBack, from, Classification::Noop, Some(notes::ALREADY_HERE))
            }
            Some(anchor) => {
                self.current_step = anchor;
                self.record(at, Command::GoingBack, anchor, Classification::Nonlinear, None)
            }
            None => self.record(at, Command::GoingBack, from, Classification::Noop, Some(notes::NO_ANCHOR)),
        }
    }

    /// The overview as it stands, without logging anything.
    pub fn overview_view(&self) -> OverviewView {
        OverviewView {
            current_step: self.current_step,
            total_steps: self.total_steps(),
            subpart_path: self.doc.doc().subpart_path(self.current_step),
            visited: self.visited.clone(),
        }
    }

    pub fn overview(&mut self, at: LogicalTime) -> OverviewView {
        let step = self.current_step;
        self.record(at, Command::Overview, step, Classification::Meta, None);
        self.overview_view()
    }

    /// Apply any loggable command. `Start` is only valid as the first entry.
    pub fn apply(&mut self, command: &Command, at: LogicalTime) -> Result<&SessionLogEntry, NavError> {
        match command {
            Command::Start { .. } => Err(NavError::NotApplicable("start")),
            Command::Next => Ok(self.apply_linear(Direction::Forward, at)),
            Command::Previous => Ok(self.apply_linear(Direction::Backward, at)),
            Command::ThisOne => self.arm_this_one(at),
            Command::Overview => {
                self.overview(at);
                Ok(self.last_entry())
            }
            Command::GoingBack => Ok(self.going_back(at)),
            Command::TagDetected {
                tag_id,
                device_id,
                detected_at,
                relay_seq,
            } => {
                let detection = TagDetection {
                    device_id: device_id.clone(),
                    tag_id: tag_id.clone(),
                    detected_at: *detected_at,
                    seq: *relay_seq,
                };
                Ok(self.on_detection(&detection, at))
            }
        }
    }

    fn record(
        &mut self,
        at: LogicalTime,
        command: Command,
        to_step: u32,
        classification: Classification,
        note: Option<&str>,
    ) -> &SessionLogEntry {
        let from_step = self
            .log
            .last()
            .map_or(1, |e| e.to_step);
        self.visited.insert(to_step);
        self.log.push(SessionLogEntry {
            seq: self.log.len() as u64 + 1,
            at,
            command,
            from_step,
            to_step,
            classification,
            note: note.map(str::to_string),
        });
        self.log.last().expect("just pushed")
    }
}

pub fn create_session(
    doc: Arc<IndexedDocument>,
    trigger_mode: TriggerMode,
    seed: Option<u64>,
) -> Result<NavState, NavError> {
    NavState::create(
        "session",
        doc,
        NavConfig {
            trigger_mode,
            ..NavConfig::default()
        },
        seed,
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockSpec, Step, StepKind, TagMode};

    /// Steps 1..=n, one block per step; `dup` lists extra (tag, step)
    /// placements for multi-mode documents.
    pub(crate) fn linear_doc(n: u32, mode: TagMode, dup: &[(&str, u32)]) -> Arc<IndexedDocument> {
        let mut steps: Vec<Step> = (1..=n)
            .map(|i| Step {
                index: i,
                kind: StepKind::Assembly,
                blocks_introduced: vec![format!("B{i}")],
                subpart_id: None,
                caption: String::new(),
                image_ref: None,
            })
            .collect();
        let mut catalog: Vec<BlockSpec> = (1..=n)
            .map(|i| BlockSpec {
                tag_id: format!("B{i}"),
                label: format!("block {i}"),
                color: "red".into(),
                asymmetric: false,
            })
            .collect();
        for (tag, step) in dup {
            steps[*step as usize - 1].blocks_introduced.push(tag.to_string());
            if !catalog.iter().any(|b| b.tag_id == *tag) {
                catalog.push(BlockSpec {
                    tag_id: tag.to_string(),
                    label: tag.to_string(),
                    color: "blue".into(),
                    asymmetric: false,
                });
            }
        }
        let mut doc = InstructionDocument {
            title: "linear".into(),
            format_version: 1,
            tag_mode: mode,
            catalog,
            steps,
            subparts: vec![],
        };
        doc.canonicalize();
        Arc::new(IndexedDocument::new(doc).unwrap())
    }

    fn session(n: u32, mode: TriggerMode) -> NavState {
        create_session(linear_doc(n, TagMode::Strict, &[]), mode, None).unwrap()
    }

    fn det(tag: &str, at: LogicalTime) -> TagDetection {
        TagDetection::local("cam", tag, at)
    }

    #[test]
    fn fresh_session() {
        let s = session(28, TriggerMode::VoiceArmed);
        assert_eq!(s.current_step(), 1);
        assert_eq!(s.total_steps(), 28);
        assert_eq!(s.log().len(), 1);
        assert_eq!(s.log()[0].classification, Classification::Meta);
        assert!(s.log()[0].has_note(notes::SESSION_START));
        assert_eq!(s.return_anchor(), None);
        assert_eq!(s.arm(), None);
    }

    #[test]
    fn empty_document_is_rejected() {
        let doc = InstructionDocument {
            title: "empty".into(),
            format_version: 1,
            tag_mode: TagMode::Strict,
            catalog: vec![],
            steps: vec![],
            subparts: vec![],
        };
        let doc = Arc::new(IndexedDocument::new(doc).unwrap());
        assert!(matches!(
            create_session(doc, TriggerMode::VoiceArmed, None),
            Err(NavError::InvalidDocument(_))
        ));
    }

    #[test]
    fn sessions_are_independent() {
        let doc = linear_doc(5, TagMode::Strict, &[]);
        let mut a = create_session(doc.clone(), TriggerMode::VoiceArmed, None).unwrap();
        let b = create_session(doc.clone(), TriggerMode::VoiceArmed, None).unwrap();
        a.apply_linear(Direction::Forward, 1);
        assert_eq!((a.current_step(), b.current_step()), (2, 1));
        assert!(Arc::ptr_eq(a.document(), b.document()));
    }

    #[test]
    fn linear_moves_and_boundaries() {
        let mut s = session(28, TriggerMode::VoiceArmed);
        let e = s.apply_linear(Direction::Backward, 1).clone();
        assert_eq!((e.to_step, e.classification), (1, Classification::Noop));
        assert!(e.has_note(notes::BOUNDARY));
        for _ in 0..2 {
            s.apply_linear(Direction::Forward, 2);
        }
        assert_eq!(s.current_step(), 3);
        assert_eq!(s.apply_linear(Direction::Forward, 3).to_step, 4);
        for _ in 0..30 {
            s.apply_linear(Direction::Forward, 4);
        }
        assert_eq!(s.current_step(), 28);
        assert!(s.last_entry().has_note(notes::BOUNDARY));
    }

    #[test]
    fn arming_rules() {
        let mut s = session(10, TriggerMode::VoiceArmed);
        s.arm_this_one(100).unwrap();
        assert_eq!(s.arm(), Some(Arm { armed_at: 100, expires_at: 5_100 }));
        s.arm_this_one(2_000).unwrap();
        assert_eq!(s.arm(), Some(Arm { armed_at: 2_000, expires_at: 7_000 }));
        assert!(s.last_entry().has_note(notes::ARMED));

        let mut d = session(10, TriggerMode::DetectionTriggered);
        assert_eq!(d.arm_this_one(0).unwrap_err(), NavError::WrongTriggerMode);
        assert_eq!(d.log().len(), 1);
    }

    #[test]
    fn resolve_jump_examples() {
        let strict = linear_doc(28, TagMode::Strict, &[]);
        for cur in 1..=28 {
            assert_eq!(resolve_jump(cur, "B7", strict.index()), Ok(7));
        }
        let multi = linear_doc(12, TagMode::Multi, &[("A", 4), ("A", 12), ("C", 4), ("C", 10)]);
        assert_eq!(resolve_jump(9, "A", multi.index()), Ok(12));
        assert_eq!(resolve_jump(7, "C", multi.index()), Ok(10));
        assert_eq!(resolve_jump(5, "A", multi.index()), Ok(4));
        assert_eq!(resolve_jump(1, "nope", multi.index()), Err(UnknownTag("nope".into())));
    }

    #[test]
    fn armed_detection_jumps_and_sets_anchor() {
        let mut s = session(28, TriggerMode::VoiceArmed);
        for _ in 0..4 {
            s.apply_linear(Direction::Forward, 0);
        }
        s.arm_this_one(10).unwrap();
        let e = s.on_detection(&det("B12", 11), 12).clone();
        assert_eq!((e.from_step, e.to_step), (5, 12));
        assert_eq!(e.classification, Classification::Nonlinear);
        assert_eq!(s.return_anchor(), Some(5));
        assert_eq!(s.arm(), None);
    }

    #[test]
    fn unarmed_or_expired_detection_is_noop() {
        let mut s = session(28, TriggerMode::VoiceArmed);
        let e = s.on_detection(&det("B12", 0), 0).clone();
        assert_eq!((e.to_step, e.classification), (1, Classification::Noop));
        assert!(e.has_note(notes::UNSOLICITED));

        s.arm_this_one(1_000).unwrap();
        let e = s.on_detection(&det("B12", 6_001), 6_001).clone();
        assert!(e.has_note(notes::ARM_TIMEOUT));
        assert_eq!(s.current_step(), 1);
        assert_eq!(s.arm(), None);

        s.arm_this_one(10_000).unwrap();
        let e = s.on_detection(&det("B12", 15_000), 15_000).clone();
        assert_eq!(e.to_step, 12, "expiry bound is inclusive");
    }

    #[test]
    fn unknown_tag_keeps_step_and_arm() {
        let mut s = session(10, TriggerMode::VoiceArmed);
        s.arm_this_one(0).unwrap();
        let e = s.on_detection(&det("ZZ", 1), 1).clone();
        assert!(e.has_note(notes::UNKNOWN_TAG));
        assert_eq!(s.current_step(), 1);
        assert!(s.arm().is_some());
    }

    #[test]
    fn detection_triggered_mode_always_jumps() {
        let doc = linear_doc(12, TagMode::Multi, &[("A", 4), ("A", 12)]);
        let mut s = create_session(doc, TriggerMode::DetectionTriggered, None).unwrap();
        for _ in 0..8 {
            s.apply_linear(Direction::Forward, 0);
        }
        let e = s.on_detection(&det("A", 1), 1).clone();
        assert_eq!((e.from_step, e.to_step), (9, 12));
        assert!(e.has_note(notes::AMBIGUOUS));
    }

    #[test]
    fn detection_of_current_step_is_noop() {
        let mut s = session(10, TriggerMode::DetectionTriggered);
        let e = s.on_detection(&det("B1", 0), 0).clone();
        assert!(e.has_note(notes::ALREADY_HERE));
        assert_eq!(s.return_anchor(), None);
    }

    #[test]
    fn going_back_contract() {
        let mut s = session(28, TriggerMode::DetectionTriggered);
        let e = s.going_back(0).clone();
        assert!(e.has_note(notes::NO_ANCHOR));

        for _ in 0..4 {
            s.apply_linear(Direction::Forward, 0);
        }
        s.on_detection(&det("B12", 0), 0);
        s.apply_linear(Direction::Forward, 0);
        assert_eq!(s.current_step(), 13);
        let e = s.going_back(0).clone();
        assert_eq!((e.to_step, e.classification), (5, Classification::Nonlinear));
        assert_eq!(s.return_anchor(), None);
        assert!(s.going_back(0).has_note(notes::NO_ANCHOR));
    }

    #[test]
    fn overview_tracks_visits() {
        let mut s = session(28, TriggerMode::DetectionTriggered);
        assert_eq!(s.overview(0).visited, BTreeSet::from([1]));
        s.apply_linear(Direction::Forward, 0);
        s.apply_linear(Direction::Forward, 0);
        let v = s.overview(0);
        assert_eq!((v.current_step, v.total_steps), (3, 28));
        s.on_detection(&det("B10", 0), 0);
        assert_eq!(s.overview(0).visited, BTreeSet::from([1, 2, 3, 10]));
        assert_eq!(s.last_entry().classification, Classification::Meta);
        assert_eq!(s.current_step(), 10);
    }

    #[test]
    fn log_sequence_is_gapless() {
        let mut s = session(5, TriggerMode::VoiceArmed);
        s.apply(&Command::Next, 1).unwrap();
        s.apply(&Command::ThisOne, 2).unwrap();
        s.apply(&Command::Overview, 3).unwrap();
        assert!(s.apply(&Command::Start { trigger_mode: TriggerMode::VoiceArmed, arm_window_ms: 1 }, 4).is_err());
        let seqs: Vec<u64> = s.log().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4]);
    }
}
