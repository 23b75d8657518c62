//! Batch runs: a TOML file listing `(document, profile, seed, repetitions)`.
//!
//! ```toml
//! [[run]]
//! document = "model-28.json"
//! seed = 42
//! repetitions = 3
//! profile = { kind = "block_scanning" }
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::{simulate, Metrics, SimConfig, SimError, SimOutcome, StrategyProfile};
use crate::model::parse_document;
use crate::nav::IndexedDocument;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchFile {
    #[serde(default)]
    pub run: Vec<BatchRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchRun {
    pub document: PathBuf,
    pub profile: StrategyProfile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad batch file: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Document { path: PathBuf, message: String },
    #[error("run {run}: {source}")]
    Sim { run: usize, source: SimError },
}

pub fn parse_batch(text: &str) -> Result<BatchFile, BatchError> {
    toml::from_str(text).map_err(|e| BatchError::Config(e.to_string()))
}

/// A single profile table, e.g. `kind = "debugging"` plus overrides.
pub fn parse_profile(text: &str) -> Result<StrategyProfile, BatchError> {
    toml::from_str(text).map_err(|e| BatchError::Config(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub document: PathBuf,
    pub profile: StrategyProfile,
    pub outcome: SimOutcome,
}

impl BatchResult {
    pub fn metrics(&self) -> Metrics {
        self.outcome.metrics
    }
}

/// Run every repetition; repetition `r` uses seed `seed + r`. Relative
/// document paths resolve against `base_dir`. Runs that exhaust their
/// budget are kept with their partial outcome.
pub fn run_batch(file: &BatchFile, base_dir: &Path, config: &SimConfig) -> Result<Vec<BatchResult>, BatchError> {
    let mut docs: HashMap<PathBuf, Arc<IndexedDocument>> = HashMap::new();
    let mut results = Vec::new();
    for run in &file.run {
        let path = base_dir.join(&run.document);
        let doc = match docs.get(&path) {
            Some(d) => d.clone(),
            None => {
                let text = std::fs::read_to_string(&path).map_err(|source| BatchError::Io {
                    path: path.clone(),
                    source,
                })?;
                let doc = parse_document(&text)
                    .and_then(IndexedDocument::new)
                    .map_err(|e| BatchError::Document {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                let doc = Arc::new(doc);
                docs.insert(path.clone(), doc.clone());
                doc
            }
        };
        for rep in 0..run.repetitions {
            let profile = StrategyProfile {
                seed: run.seed.wrapping_add(rep as u64),
                ..run.profile.clone()
            };
            let outcome = match simulate(doc.clone(), &profile, config) {
                Ok(o) => o,
                Err(SimError::BudgetExhausted { partial, .. }) => *partial,
                Err(source) => {
                    return Err(BatchError::Sim {
                        run: results.len(),
                        source,
                    })
                }
            };
            results.push(BatchResult {
                document: run.document.clone(),
                profile,
                outcome,
            });
        }
    }
    Ok(results)
}
