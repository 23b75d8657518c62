//! Rule-based labelling of jumps by navigation strategy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::InstructionDocument;
use crate::nav::SessionLogEntry;

/// A jump back to a visited step counts as debugging when a successful
/// `GoingBack` follows within this many entries.
pub const DEBUG_LOOKAHEAD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpLabel {
    SelectiveSkipping,
    Debugging,
    BlockScanning,
    Unclassified,
}

impl JumpLabel {
    pub const ALL: [JumpLabel; 4] = [
        JumpLabel::SelectiveSkipping,
        JumpLabel::Debugging,
        JumpLabel::BlockScanning,
        JumpLabel::Unclassified,
    ];
}

impl fmt::Display for JumpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JumpLabel::SelectiveSkipping => "selective_skipping",
            JumpLabel::Debugging => "debugging",
            JumpLabel::BlockScanning => "block_scanning",
            JumpLabel::Unclassified => "unclassified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledJump {
    pub seq: u64,
    pub from_step: u32,
    pub to_step: u32,
    pub label: JumpLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("log does not match document at seq {seq}: step {step} does not exist")]
    LogDocMismatch { seq: u64, step: u32 },
}

/// Label every block-triggered jump in the log:
///
/// * from a preview or overview page: selective skipping;
/// * to an already visited step, undone by `GoingBack` within
///   [`DEBUG_LOOKAHEAD`] entries: debugging;
/// * to an unvisited assembly step: block scanning;
/// * anything else: unclassified.
pub fn classify_jumps(
    log: &[SessionLogEntry],
    doc: &InstructionDocument,
) -> Result<Vec<LabeledJump>, ClassifyError> {
    let mut visited = BTreeSet::new();
    let mut labels = Vec::new();
    for (i, entry) in log.iter().enumerate() {
        for step in [entry.from_step, entry.to_step] {
            if doc.step(step).is_none() {
                return Err(ClassifyError::LogDocMismatch { seq: entry.seq, step });
            }
        }
        if i == 0 {
            visited.insert(entry.from_step);
        }
        if entry.is_jump() {
            let from = doc.step(entry.from_step).expect("checked above");
            let to = doc.step(entry.to_step).expect("checked above");
            let label = if !from.is_assembly() {
                JumpLabel::SelectiveSkipping
            } else if visited.contains(&entry.to_step) && undone_soon(&log[i + 1..]) {
                JumpLabel::Debugging
            } else if !visited.contains(&entry.to_step) && to.is_assembly() {
                JumpLabel::BlockScanning
            } else {
                JumpLabel::Unclassified
            };
            labels.push(LabeledJump {
                seq: entry.seq,
                from_step: entry.from_step,
                to_step: entry.to_step,
                label,
            });
        }
        visited.insert(entry.to_step);
    }
    Ok(labels)
}

fn undone_soon(rest: &[SessionLogEntry]) -> bool {
    for e in rest.iter().take(DEBUG_LOOKAHEAD) {
        if e.is_successful_going_back() {
            return true;
        }
        if e.is_jump() {
            return false;
        }
    }
    false
}

/// Counts of (ground truth, predicted) label pairs, matched by seq.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: BTreeMap<(JumpLabel, JumpLabel), u32>,
}

impl ConfusionMatrix {
    pub fn build(truth: &[LabeledJump], predicted: &[LabeledJump]) -> Self {
        let by_seq: BTreeMap<u64, JumpLabel> = predicted.iter().map(|j| (j.seq, j.label)).collect();
        let mut counts = BTreeMap::new();
        for t in truth {
            let p = by_seq.get(&t.seq).copied().unwrap_or(JumpLabel::Unclassified);
            *counts.entry((t.label, p)).or_insert(0) += 1;
        }
        ConfusionMatrix { counts }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn correct(&self) -> u32 {
        self.counts
            .iter()
            .filter(|((t, p), _)| t == p)
            .map(|(_, v)| v)
            .sum()
    }

    /// Rows are ground truth, columns predictions.
    pub fn to_table(&self) -> String {
        let mut out = String::from("truth\\predicted");
        for p in JumpLabel::ALL {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for t in JumpLabel::ALL {
            out.push_str(&t.to_string());
            for p in JumpLabel::ALL {
                out.push_str(&format!(",{}", self.counts.get(&(t, p)).unwrap_or(&0)));
            }
            out.push('\n');
        }
        out
    }
}
