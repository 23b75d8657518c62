//! Session log entries and the line-delimited export format.
//!
//! One JSON object per line, fields in the order
//! `seq, at, command, from_step, to_step, classification, note`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LogicalTime, TriggerMode};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Command {
    /// First entry of every session; carries the configuration replay needs.
    Start {
        trigger_mode: TriggerMode,
        arm_window_ms: u64,
    },
    Next,
    Previous,
    ThisOne,
    Overview,
    GoingBack,
    TagDetected {
        tag_id: String,
        device_id: String,
        detected_at: LogicalTime,
        relay_seq: u64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Start { .. } => "start",
            Command::Next => "next",
            Command::Previous => "previous",
            Command::ThisOne => "this_one",
            Command::Overview => "overview",
            Command::GoingBack => "going_back",
            Command::TagDetected { .. } => "tag_detected",
        }
    }

    /// Parse one of the five user-issued command names.
    pub fn from_user_variant(name: &str) -> Option<Command> {
        Some(match name {
            "next" => Command::Next,
            "previous" => Command::Previous,
            "this_one" => Command::ThisOne,
            "overview" => Command::Overview,
            "going_back" => Command::GoingBack,
            _ => return None,
        })
    }

    pub fn is_jump_trigger(&self) -> bool {
        matches!(self, Command::TagDetected { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Linear,
    Nonlinear,
    Meta,
    Noop,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Linear => "linear",
            Classification::Nonlinear => "nonlinear",
            Classification::Meta => "meta",
            Classification::Noop => "noop",
        })
    }
}

/// Notes attached to log entries.
pub mod notes {
    pub const SESSION_START: &str = "session_start";
    pub const BOUNDARY: &str = "boundary";
    pub const ARMED: &str = "armed";
    pub const ARM_TIMEOUT: &str = "arm_timeout";
    pub const UNSOLICITED: &str = "unsolicited_detection";
    pub const UNKNOWN_TAG: &str = "unknown_tag";
    pub const AMBIGUOUS: &str = "ambiguous_resolved";
    pub const ALREADY_HERE: &str = "already_here";
    pub const NO_ANCHOR: &str = "no_anchor";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub seq: u64,
    pub at: LogicalTime,
    pub command: Command,
    pub from_step: u32,
    pub to_step: u32,
    pub classification: Classification,
    pub note: Option<String>,
}

impl SessionLogEntry {
    pub fn has_note(&self, note: &str) -> bool {
        self.note.as_deref() == Some(note)
    }

    /// A ThisOne-initiated jump that changed the step.
    pub fn is_jump(&self) -> bool {
        self.classification == Classification::Nonlinear && self.command.is_jump_trigger()
    }

    pub fn is_successful_going_back(&self) -> bool {
        self.classification == Classification::Nonlinear && self.command == Command::GoingBack
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entry serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

pub fn export_log(entries: &[SessionLogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Parse an exported log. Blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<SessionLogEntry>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LogParseError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
