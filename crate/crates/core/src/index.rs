//! Tag-to-step lookup and complexity counts.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{InstructionDocument, StepRange};

/// Maps every tag introduced by an assembly step to the ascending,
/// duplicate-free list of steps introducing it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BlockIndex {
    entries: BTreeMap<String, Vec<u32>>,
}

impl BlockIndex {
    pub fn build(doc: &InstructionDocument) -> Self {
        let mut entries: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for step in doc.assembly_steps() {
            for tag in &step.blocks_introduced {
                entries.entry(tag.clone()).or_default().push(step.index);
            }
        }
        for steps in entries.values_mut() {
            steps.sort_unstable();
            steps.dedup();
        }
        BlockIndex { entries }
    }

    pub fn steps_for(&self, tag: &str) -> Option<&[u32]> {
        self.entries.get(tag).map(Vec::as_slice)
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.entries.contains_key(tag)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Number of tags per list length.
    pub fn length_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for steps in self.entries.values() {
            *hist.entry(steps.len()).or_insert(0) += 1;
        }
        hist
    }
}

pub fn build_block_index(doc: &InstructionDocument) -> BlockIndex {
    BlockIndex::build(doc)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComplexityReport {
    pub block_count: u32,
    pub step_count: u32,
    pub asymmetric_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sub-part {0:?}")]
pub struct UnknownSubpart(pub String);

/// Counts over the assembly steps of the scope (the whole document when
/// `scope` is `None`). `block_count` and `asymmetric_count` count block
/// placements; `step_count` counts assembly steps only, so preview pages do
/// not inflate it.
pub fn complexity_metrics(
    doc: &InstructionDocument,
    scope: Option<&str>,
) -> Result<ComplexityReport, UnknownSubpart> {
    let range = match scope {
        Some(id) => {
            doc.subpart(id)
                .ok_or_else(|| UnknownSubpart(id.to_string()))?
                .step_range
        }
        None => StepRange(1, doc.total_steps()),
    };
    let mut report = ComplexityReport::default();
    for step in doc.assembly_steps().filter(|s| range.contains(s.index)) {
        report.step_count += 1;
        for tag in &step.blocks_introduced {
            report.block_count += 1;
            if doc.block(tag).is_some_and(|b| b.asymmetric) {
                report.asymmetric_count += 1;
            }
        }
    }
    Ok(report)
}
