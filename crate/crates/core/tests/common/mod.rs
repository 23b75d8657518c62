#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepnav_core::model::{BlockSpec, InstructionDocument, Step, StepKind, TagMode};
use stepnav_core::nav::IndexedDocument;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture(name: &str) -> InstructionDocument {
    stepnav_core::parse_document(&fixture_text(name)).unwrap()
}

pub fn indexed(name: &str) -> Arc<IndexedDocument> {
    Arc::new(IndexedDocument::new(fixture(name)).unwrap())
}

/// Random multi-mode document: `n` assembly steps, each introducing one or
/// two tags drawn from a pool, every tag used at most `max_occurrences`
/// times.
pub fn random_multi_doc(rng: &mut ChaCha8Rng, n: u32, max_occurrences: usize) -> InstructionDocument {
    let pool = (n as usize).max(2);
    let mut uses = vec![0usize; pool];
    let mut steps = Vec::new();
    for index in 1..=n {
        let mut tags: Vec<String> = Vec::new();
        let want = rng.random_range(1..=2);
        for _ in 0..8 {
            if tags.len() == want {
                break;
            }
            let t = rng.random_range(0..pool);
            let tag = format!("K{t:03}");
            if uses[t] < max_occurrences && !tags.contains(&tag) {
                uses[t] += 1;
                tags.push(tag);
            }
        }
        if tags.is_empty() {
            // fall back to a fresh tag
            tags.push(format!("F{index:03}"));
        }
        steps.push(Step {
            index,
            kind: StepKind::Assembly,
            blocks_introduced: tags,
            subpart_id: None,
            caption: String::new(),
            image_ref: None,
        });
    }
    let mut catalog: Vec<BlockSpec> = steps
        .iter()
        .flat_map(|s| s.blocks_introduced.iter())
        .map(|t| BlockSpec {
            tag_id: t.clone(),
            label: t.clone(),
            color: "grey".into(),
            asymmetric: false,
        })
        .collect();
    catalog.sort_by(|a, b| a.tag_id.cmp(&b.tag_id));
    catalog.dedup();
    let mut doc = InstructionDocument {
        title: "random".into(),
        format_version: 1,
        tag_mode: TagMode::Multi,
        catalog,
        steps,
        subparts: vec![],
    };
    doc.canonicalize();
    doc
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute force: scan every step introducing `tag`, keep the one nearest to
/// `current`, later step on ties.
pub fn brute_force_jump(doc: &InstructionDocument, current: u32, tag: &str) -> Option<u32> {
    let mut best: Option<u32> = None;
    for step in &doc.steps {
        if step.kind != StepKind::Assembly || !step.blocks_introduced.iter().any(|t| t == tag) {
            continue;
        }
        let d = (step.index as i64 - current as i64).abs();
        best = match best {
            None => Some(step.index),
            Some(b) => {
                let bd = (b as i64 - current as i64).abs();
                if d < bd || (d == bd && step.index > b) {
                    Some(step.index)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}
