//! Instruction documents: blocks, steps and the sub-part hierarchy.
//!
//! Documents are plain data. [`parse_document`] is the only constructor that
//! guarantees the structural invariants; [`parse_unchecked`] stops after the
//! syntax layer so the linter can report every problem at once.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validate::{validate, Severity};

/// The only document format version this crate reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// A physical block carrying a printed tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub tag_id: String,
    pub label: String,
    pub color: String,
    #[serde(default)]
    pub asymmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Assembly,
    Preview,
    OverviewPage,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Assembly => "assembly",
            StepKind::Preview => "preview",
            StepKind::OverviewPage => "overview_page",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub index: u32,
    pub kind: StepKind,
    #[serde(default)]
    pub blocks_introduced: Vec<String>,
    /// For assembly steps the innermost sub-part containing the step; for
    /// preview steps the sub-part being previewed. `None` for joining steps
    /// and overview pages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subpart_id: Option<String>,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Step {
    pub fn is_assembly(&self) -> bool {
        self.kind == StepKind::Assembly
    }
}

/// Inclusive range of step indices, serialized as `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepRange(pub u32, pub u32);

impl StepRange {
    pub fn first(self) -> u32 {
        self.0
    }

    pub fn last(self) -> u32 {
        self.1
    }

    pub fn contains(self, index: u32) -> bool {
        self.0 <= index && index <= self.1
    }

    pub fn contains_range(self, other: StepRange) -> bool {
        self.0 <= other.0 && other.1 <= self.1
    }

    pub fn overlaps(self, other: StepRange) -> bool {
        self.0 <= other.1 && other.0 <= self.1
    }

    pub fn len(self) -> u32 {
        if self.1 < self.0 {
            0
        } else {
            self.1 - self.0 + 1
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for StepRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubPart {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub step_range: StepRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TagMode {
    /// Every tag is introduced by at most one step.
    #[default]
    Strict,
    /// A tag may be introduced by several steps (identical blocks).
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionDocument {
    pub title: String,
    pub format_version: u32,
    pub tag_mode: TagMode,
    #[serde(default)]
    pub catalog: Vec<BlockSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub subparts: Vec<SubPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("malformed document: {0}")]
    MalformedSyntax(String),
    #[error("duplicate step index {0}")]
    DuplicateStepIndex(u32),
    #[error("step {step} references unknown tag {tag:?}")]
    UnknownTagReference { step: u32, tag: String },
    #[error("tag {tag:?} introduced by more than one step in strict mode ({location})")]
    DuplicateTagInStrictMode { tag: String, location: String },
    #[error("broken sub-part range at {location}: {message}")]
    BrokenSubpartRange { location: String, message: String },
    #[error("invalid document [{rule}] at {location}: {message}")]
    Invalid {
        rule: &'static str,
        location: String,
        message: String,
    },
}

impl InstructionDocument {
    pub fn total_steps(&self) -> u32 {
        self.steps.len() as u32
    }

    /// Step by 1-based index. Relies on the canonical ordering established
    /// by parsing; falls back to a scan for hand-built documents.
    pub fn step(&self, index: u32) -> Option<&Step> {
        if index == 0 {
            return None;
        }
        match self.steps.get(index as usize - 1) {
            Some(s) if s.index == index => Some(s),
            _ => self.steps.iter().find(|s| s.index == index),
        }
    }

    pub fn block(&self, tag_id: &str) -> Option<&BlockSpec> {
        self.catalog.iter().find(|b| b.tag_id == tag_id)
    }

    pub fn subpart(&self, id: &str) -> Option<&SubPart> {
        self.subparts.iter().find(|s| s.id == id)
    }

    pub fn top_level_subparts(&self) -> impl Iterator<Item = &SubPart> {
        self.subparts.iter().filter(|s| s.parent.is_none())
    }

    /// Innermost sub-part whose range contains `index`.
    pub fn innermost_subpart(&self, index: u32) -> Option<&SubPart> {
        self.subparts
            .iter()
            .filter(|s| s.step_range.contains(index))
            .min_by_key(|s| (s.step_range.len(), s.step_range.first()))
    }

    /// Sub-part names from the root down to the innermost sub-part
    /// containing `index`.
    pub fn subpart_path(&self, index: u32) -> Vec<String> {
        let mut path = Vec::new();
        let mut cur = self.innermost_subpart(index);
        while let Some(sp) = cur {
            path.push(sp.name.clone());
            if path.len() > self.subparts.len() {
                break;
            }
            cur = sp.parent.as_deref().and_then(|p| self.subpart(p));
        }
        path.reverse();
        path
    }

    pub fn assembly_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.is_assembly())
    }

    /// First assembly step inside the given range.
    pub fn first_assembly_in(&self, range: StepRange) -> Option<u32> {
        self.assembly_steps()
            .map(|s| s.index)
            .filter(|&i| range.contains(i))
            .min()
    }

    /// Sort steps by index, catalog by tag id and sub-parts by id.
    pub fn canonicalize(&mut self) {
        self.steps.sort_by_key(|s| s.index);
        self.catalog.sort_by(|a, b| a.tag_id.cmp(&b.tag_id));
        self.subparts.sort_by(|a, b| a.id.cmp(&b.id));
    }

    /// Canonical serialization. Output ends with a newline.
    pub fn to_canonical_string(&self) -> String {
        let mut doc = self.clone();
        doc.canonicalize();
        let mut out = serde_json::to_string_pretty(&doc).expect("document serializes");
        out.push('\n');
        out
    }
}

/// Syntax-only parse: checks the text is a well-typed document with a
/// supported version, and returns it in canonical order. No structural
/// invariants are checked.
pub fn parse_unchecked(text: &str) -> Result<InstructionDocument, DocumentError> {
    let mut doc: InstructionDocument =
        serde_json::from_str(text).map_err(|e| DocumentError::MalformedSyntax(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(DocumentError::MalformedSyntax(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    doc.canonicalize();
    Ok(doc)
}

/// Parse and check every structural invariant. Warnings from the linter do
/// not fail the parse.
pub fn parse_document(text: &str) -> Result<InstructionDocument, DocumentError> {
    let doc = parse_unchecked(text)?;
    check_document(&doc)?;
    Ok(doc)
}

pub fn parse_document_bytes(bytes: &[u8]) -> Result<InstructionDocument, DocumentError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| DocumentError::MalformedSyntax(format!("not UTF-8: {e}")))?;
    parse_document(text)
}

/// Returns the first error-severity violation as a [`DocumentError`].
pub fn check_document(doc: &InstructionDocument) -> Result<(), DocumentError> {
    let report = validate(doc);
    let Some(v) = report
        .violations
        .iter()
        .find(|v| v.severity == Severity::Error)
    else {
        return Ok(());
    };
    let location = v.location.to_string();
    Err(match v.rule {
        "DUPLICATE_STEP_INDEX" => DocumentError::DuplicateStepIndex(v.location.step().unwrap_or(0)),
        "UNKNOWN_TAG" => DocumentError::UnknownTagReference {
            step: v.location.step().unwrap_or(0),
            tag: v.subject.clone().unwrap_or_default(),
        },
        "DUPLICATE_TAG_STRICT" => DocumentError::DuplicateTagInStrictMode {
            tag: v.subject.clone().unwrap_or_default(),
            location,
        },
        rule if rule.starts_with("SUBPART_") => DocumentError::BrokenSubpartRange {
            location,
            message: v.message.clone(),
        },
        rule => DocumentError::Invalid {
            rule,
            location,
            message: v.message.clone(),
        },
    })
}
