//! Document linter. Violations are data: every rule is evaluated and the
//! report lists each failure with its location.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::model::{InstructionDocument, StepKind, TagMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "at", rename_all = "snake_case")]
pub enum Location {
    Document,
    Step(u32),
    Subpart(String),
    Catalog(String),
}

impl Location {
    pub fn step(&self) -> Option<u32> {
        match self {
            Location::Step(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Document => f.write_str("document"),
            Location::Step(i) => write!(f, "step:{i}"),
            Location::Subpart(id) => write!(f, "subpart:{id}"),
            Location::Catalog(tag) => write!(f, "catalog:{tag}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub severity: Severity,
    pub location: Location,
    pub message: String,
    /// Tag or sub-part id the violation is about, when there is one.
    #[serde(skip)]
    pub subject: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| v.severity == Severity::Error)
    }

    pub fn rules(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    /// One violation per line: `RULE_ID<TAB>severity<TAB>location<TAB>message`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            let message = v.message.replace(['\t', '\n'], " ");
            out.push_str(&format!("{}\t{}\t{}\t{}\n", v.rule, v.severity, v.location, message));
        }
        out
    }

    fn push(&mut self, rule: &'static str, severity: Severity, location: Location, message: String) {
        self.violations.push(Violation {
            rule,
            severity,
            location,
            message,
            subject: None,
        });
    }

    fn push_about(
        &mut self,
        rule: &'static str,
        location: Location,
        subject: &str,
        message: String,
    ) {
        self.violations.push(Violation {
            rule,
            severity: Severity::Error,
            location,
            message,
            subject: Some(subject.to_string()),
        });
    }
}

pub fn validate(doc: &InstructionDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_steps(doc, &mut report);
    check_catalog(doc, &mut report);
    check_blocks(doc, &mut report);
    check_subparts(doc, &mut report);
    check_step_membership(doc, &mut report);
    check_previews(doc, &mut report);
    report
}

fn check_steps(doc: &InstructionDocument, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for step in &doc.steps {
        if !seen.insert(step.index) {
            report.push(
                "DUPLICATE_STEP_INDEX",
                Severity::Error,
                Location::Step(step.index),
                format!("step index {} appears more than once", step.index),
            );
        }
    }
    let n = seen.len() as u32;
    let expected: BTreeSet<u32> = (1..=n).collect();
    if seen != expected {
        let missing: Vec<String> = expected.difference(&seen).map(u32::to_string).collect();
        let extra: Vec<String> = seen.difference(&expected).map(u32::to_string).collect();
        report.push(
            "STEP_INDEX_GAP",
            Severity::Error,
            Location::Document,
            format!(
                "step indices must be exactly 1..={n}; missing [{}], out of range [{}]",
                missing.join(","),
                extra.join(",")
            ),
        );
    }
}

fn check_catalog(doc: &InstructionDocument, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for block in &doc.catalog {
        if block.tag_id.is_empty() {
            report.push(
                "EMPTY_TAG_ID",
                Severity::Error,
                Location::Catalog(String::new()),
                format!("catalog entry {:?} has an empty tag_id", block.label),
            );
        } else if !seen.insert(block.tag_id.as_str()) {
            report.push(
                "DUPLICATE_CATALOG_TAG",
                Severity::Error,
                Location::Catalog(block.tag_id.clone()),
                format!("tag {:?} is listed more than once", block.tag_id),
            );
        }
    }
}

fn check_blocks(doc: &InstructionDocument, report: &mut ValidationReport) {
    let catalog: BTreeSet<&str> = doc.catalog.iter().map(|b| b.tag_id.as_str()).collect();
    // tag -> steps introducing it
    let mut owners: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for step in &doc.steps {
        let loc = Location::Step(step.index);
        match step.kind {
            StepKind::Assembly if step.blocks_introduced.is_empty() => report.push(
                "ASSEMBLY_WITHOUT_BLOCKS",
                Severity::Error,
                loc.clone(),
                "assembly step introduces no blocks".into(),
            ),
            StepKind::Preview | StepKind::OverviewPage if !step.blocks_introduced.is_empty() => {
                report.push(
                    "BLOCKS_ON_NON_ASSEMBLY",
                    Severity::Error,
                    loc.clone(),
                    format!("{} step must not introduce blocks", step.kind.as_str()),
                )
            }
            _ => {}
        }
        for tag in &step.blocks_introduced {
            if !catalog.contains(tag.as_str()) {
                report.push_about(
                    "UNKNOWN_TAG",
                    loc.clone(),
                    tag,
                    format!("tag {tag:?} is not in the catalog"),
                );
            }
            let list = owners.entry(tag.as_str()).or_default();
            if list.last() != Some(&step.index) {
                list.push(step.index);
            }
        }
    }
    if doc.tag_mode == TagMode::Strict {
        for (tag, steps) in &owners {
            if steps.len() > 1 {
                let at: Vec<String> = steps.iter().map(u32::to_string).collect();
                report.push_about(
                    "DUPLICATE_TAG_STRICT",
                    Location::Step(steps[1]),
                    tag,
                    format!("tag {tag:?} introduced in steps {}", at.join(",")),
                );
            }
        }
    }
    for block in &doc.catalog {
        if !block.tag_id.is_empty() && !owners.contains_key(block.tag_id.as_str()) {
            report.push(
                "UNUSED_CATALOG_BLOCK",
                Severity::Warning,
                Location::Catalog(block.tag_id.clone()),
                format!("block {:?} is never introduced by a step", block.tag_id),
            );
        }
    }
}

fn check_subparts(doc: &InstructionDocument, report: &mut ValidationReport) {
    let n = doc.total_steps();
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for (i, sp) in doc.subparts.iter().enumerate() {
        if by_id.insert(sp.id.as_str(), i).is_some() {
            report.push(
                "SUBPART_DUPLICATE_ID",
                Severity::Error,
                Location::Subpart(sp.id.clone()),
                format!("sub-part id {:?} is used more than once", sp.id),
            );
        }
    }
    for sp in &doc.subparts {
        let r = sp.step_range;
        if r.first() < 1 || r.last() > n || r.first() > r.last() {
            report.push(
                "SUBPART_RANGE_INVALID",
                Severity::Error,
                Location::Subpart(sp.id.clone()),
                format!("range {r} is not a non-empty sub-range of 1..={n}"),
            );
        }
        if let Some(parent) = &sp.parent {
            match by_id.get(parent.as_str()) {
                None => report.push(
                    "SUBPART_UNKNOWN_PARENT",
                    Severity::Error,
                    Location::Subpart(sp.id.clone()),
                    format!("parent {parent:?} does not exist"),
                ),
                Some(&pi) => {
                    let pr = doc.subparts[pi].step_range;
                    if !pr.contains_range(r) {
                        report.push(
                            "SUBPART_NOT_NESTED",
                            Severity::Error,
                            Location::Subpart(sp.id.clone()),
                            format!("range {r} is not contained in parent {parent:?} range {pr}"),
                        );
                    }
                }
            }
        }
    }
    // cycles in the parent relation
    for sp in &doc.subparts {
        let mut cur = sp.parent.as_deref();
        let mut hops = 0;
        while let Some(p) = cur {
            if p == sp.id || hops > doc.subparts.len() {
                report.push(
                    "SUBPART_CYCLE",
                    Severity::Error,
                    Location::Subpart(sp.id.clone()),
                    "parent chain forms a cycle".into(),
                );
                break;
            }
            hops += 1;
            cur = by_id
                .get(p)
                .and_then(|&i| doc.subparts[i].parent.as_deref());
        }
    }
    // siblings (same parent) must be disjoint
    let mut groups: BTreeMap<Option<&str>, Vec<&crate::model::SubPart>> = BTreeMap::new();
    for sp in &doc.subparts {
        groups.entry(sp.parent.as_deref()).or_default().push(sp);
    }
    for siblings in groups.values() {
        for (i, a) in siblings.iter().enumerate() {
            for b in &siblings[i + 1..] {
                if a.step_range.overlaps(b.step_range) {
                    report.push(
                        "SUBPART_OVERLAP",
                        Severity::Error,
                        Location::Subpart(b.id.clone()),
                        format!(
                            "range {} overlaps sibling {:?} range {}",
                            b.step_range, a.id, a.step_range
                        ),
                    );
                }
            }
        }
    }
    for sp in &doc.subparts {
        if doc.first_assembly_in(sp.step_range).is_none() {
            report.push(
                "SUBPART_WITHOUT_ASSEMBLY",
                Severity::Warning,
                Location::Subpart(sp.id.clone()),
                format!("range {} contains no assembly step", sp.step_range),
            );
        }
    }
}

fn check_step_membership(doc: &InstructionDocument, report: &mut ValidationReport) {
    for step in &doc.steps {
        if let Some(id) = &step.subpart_id {
            if doc.subpart(id).is_none() {
                report.push(
                    "UNKNOWN_SUBPART_REF",
                    Severity::Error,
                    Location::Step(step.index),
                    format!("sub-part {id:?} does not exist"),
                );
                continue;
            }
        }
        if step.kind != StepKind::Assembly {
            continue;
        }
        let expected = doc.innermost_subpart(step.index).map(|s| s.id.as_str());
        if step.subpart_id.as_deref() != expected {
            report.push(
                "STEP_SUBPART_MISMATCH",
                Severity::Error,
                Location::Step(step.index),
                format!(
                    "assembly step belongs to {} but declares {}",
                    expected.map_or("no sub-part".to_string(), |e| format!("{e:?}")),
                    step.subpart_id
                        .as_deref()
                        .map_or("no sub-part".to_string(), |e| format!("{e:?}")),
                ),
            );
        }
    }
}

fn check_previews(doc: &InstructionDocument, report: &mut ValidationReport) {
    for step in doc.steps.iter().filter(|s| s.kind == StepKind::Preview) {
        let Some(id) = &step.subpart_id else {
            report.push(
                "PREVIEW_WITHOUT_SUBPART",
                Severity::Error,
                Location::Step(step.index),
                "preview step does not name the sub-part it previews".into(),
            );
            continue;
        };
        let Some(sp) = doc.subpart(id) else { continue };
        if let Some(first) = doc.first_assembly_in(sp.step_range) {
            if step.index >= first {
                report.push(
                    "PREVIEW_AFTER_STEPS",
                    Severity::Error,
                    Location::Step(step.index),
                    format!("preview of {id:?} must come before its first assembly step {first}"),
                );
            }
        }
    }
}
