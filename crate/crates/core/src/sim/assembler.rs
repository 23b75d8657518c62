//! Seeded assembler behaviour driving a private navigation session.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::classify::{JumpLabel, LabeledJump};
use super::metrics::{compute_metrics, Metrics};
use crate::detection::TagDetection;
use crate::model::StepRange;
use crate::nav::{
    resolve_jump, Classification, Command, Direction, IndexedDocument, LogicalTime, NavConfig,
    NavState, SessionLogEntry, TriggerMode, DEFAULT_ARM_WINDOW_MS,
};

pub const SIM_DEVICE_ID: &str = "sim-assembler";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    LinearBaseline,
    SelectiveSkipping,
    Debugging,
    BlockScanning,
    Mixed,
}

impl StrategyKind {
    pub const PURE: [StrategyKind; 4] = [
        StrategyKind::LinearBaseline,
        StrategyKind::SelectiveSkipping,
        StrategyKind::Debugging,
        StrategyKind::BlockScanning,
    ];
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::LinearBaseline => "linear_baseline",
            StrategyKind::SelectiveSkipping => "selective_skipping",
            StrategyKind::Debugging => "debugging",
            StrategyKind::BlockScanning => "block_scanning",
            StrategyKind::Mixed => "mixed",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.replace('-', "_").as_str() {
            "linear_baseline" | "linear" => StrategyKind::LinearBaseline,
            "selective_skipping" => StrategyKind::SelectiveSkipping,
            "debugging" => StrategyKind::Debugging,
            "block_scanning" => StrategyKind::BlockScanning,
            "mixed" => StrategyKind::Mixed,
            other => return Err(format!("unknown profile {other:?}")),
        })
    }
}

/// Probability of each behaviour being chosen at a decision point of a
/// `Mixed` profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeights {
    pub linear_baseline: f64,
    pub selective_skipping: f64,
    pub debugging: f64,
    pub block_scanning: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            linear_baseline: 0.25,
            selective_skipping: 0.25,
            debugging: 0.25,
            block_scanning: 0.25,
        }
    }
}

impl MixWeights {
    fn as_array(&self) -> [(StrategyKind, f64); 4] {
        [
            (StrategyKind::LinearBaseline, self.linear_baseline),
            (StrategyKind::SelectiveSkipping, self.selective_skipping),
            (StrategyKind::Debugging, self.debugging),
            (StrategyKind::BlockScanning, self.block_scanning),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyProfile {
    pub kind: StrategyKind,
    /// Chance of skipping ahead from a preview or overview page.
    pub skip_probability: f64,
    /// Chance of a mistake when placing the blocks of a step.
    pub error_rate: f64,
    /// Chance that a debugging detour returns with linear moves instead of
    /// `GoingBack`.
    pub linear_return_probability: f64,
    pub weights: Option<MixWeights>,
    pub seed: u64,
}

impl Default for StrategyProfile {
    fn default() -> Self {
        StrategyProfile {
            kind: StrategyKind::LinearBaseline,
            skip_probability: 0.8,
            error_rate: 0.15,
            linear_return_probability: 0.0,
            weights: None,
            seed: 0,
        }
    }
}

impl StrategyProfile {
    pub fn new(kind: StrategyKind, seed: u64) -> Self {
        StrategyProfile {
            kind,
            seed,
            weights: (kind == StrategyKind::Mixed).then(MixWeights::default),
            ..StrategyProfile::default()
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        let unit = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SimError::InvalidProfile(format!("{name} {p} outside [0, 1]")))
            }
        };
        unit("skip_probability", self.skip_probability)?;
        unit("error_rate", self.error_rate)?;
        unit("linear_return_probability", self.linear_return_probability)?;
        if self.kind == StrategyKind::Mixed {
            let w = self
                .weights
                .ok_or_else(|| SimError::InvalidProfile("mixed profile needs weights".into()))?;
            let mut sum = 0.0;
            for (kind, p) in w.as_array() {
                unit(&format!("weight {kind}"), p)?;
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SimError::InvalidProfile(format!("weights sum to {sum}, not 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Maximum commands after the start entry; `None` means 10 x N.
    pub budget: Option<usize>,
    pub arm_window_ms: u64,
    /// Logical time between consecutive commands.
    pub step_ms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            budget: None,
            arm_window_ms: DEFAULT_ARM_WINDOW_MS,
            step_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Completed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub status: SimStatus,
    pub log: Vec<SessionLogEntry>,
    pub metrics: Metrics,
    /// The label each jump was performed under.
    pub ground_truth: Vec<LabeledJump>,
    /// Steps where a mistake was made.
    pub injected_errors: Vec<u32>,
    /// Final state of the private session.
    pub final_step: u32,
    pub final_anchor: Option<u32>,
    pub final_visited: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("command budget of {budget} exhausted")]
    BudgetExhausted { budget: usize, partial: Box<SimOutcome> },
}

struct Exhausted;

#[derive(Debug, Clone, Copy)]
struct PendingError {
    step: u32,
    moves_left: u32,
}

struct Driver {
    doc: Arc<IndexedDocument>,
    state: NavState,
    rng: ChaCha8Rng,
    now: LogicalTime,
    step_ms: u64,
    budget: usize,
    used: usize,
    truth: Vec<LabeledJump>,
    pending: Vec<PendingError>,
    injected: Vec<u32>,
}

impl Driver {
    fn tick(&mut self) -> Result<LogicalTime, Exhausted> {
        if self.used >= self.budget {
            return Err(Exhausted);
        }
        self.used += 1;
        self.now += self.step_ms;
        Ok(self.now)
    }

    fn current(&self) -> u32 {
        self.state.current_step()
    }

    fn n(&self) -> u32 {
        self.doc.total_steps()
    }

    fn is_assembly(&self, step: u32) -> bool {
        self.doc.doc().step(step).is_some_and(|s| s.is_assembly())
    }

    fn complete(&self) -> bool {
        let visited = self.state.visited();
        self.doc.doc().assembly_steps().all(|s| visited.contains(&s.index))
    }

    fn next(&mut self) -> Result<(), Exhausted> {
        let at = self.tick()?;
        self.state.apply_linear(Direction::Forward, at);
        for p in &mut self.pending {
            p.moves_left = p.moves_left.saturating_sub(1);
        }
        Ok(())
    }

    fn previous(&mut self) -> Result<(), Exhausted> {
        let at = self.tick()?;
        self.state.apply_linear(Direction::Backward, at);
        Ok(())
    }

    /// Show a block that resolves to `target` from here. Returns false when
    /// no block of the target step does.
    fn jump_to(&mut self, target: u32, label: JumpLabel) -> Result<bool, Exhausted> {
        let from = self.current();
        let Some(step) = self.doc.doc().step(target) else {
            return Ok(false);
        };
        let Some(tag) = step
            .blocks_introduced
            .iter()
            .find(|t| resolve_jump(from, t, self.doc.index()) == Ok(target))
            .cloned()
        else {
            return Ok(false);
        };
        let at = self.tick()?;
        self.state
            .arm_this_one(at)
            .expect("simulated sessions are voice armed");
        let at = self.tick()?;
        let detection = TagDetection::local(SIM_DEVICE_ID, &tag, at - self.step_ms / 2);
        let entry = self.state.on_detection(&detection, at);
        debug_assert_eq!(entry.classification, Classification::Nonlinear);
        let entry = entry.clone();
        self.truth.push(LabeledJump {
            seq: entry.seq,
            from_step: entry.from_step,
            to_step: entry.to_step,
            label,
        });
        Ok(true)
    }

    fn overview(&mut self) -> Result<(), Exhausted> {
        let at = self.tick()?;
        self.state.overview(at);
        Ok(())
    }

    fn going_back(&mut self) -> Result<(), Exhausted> {
        let at = self.tick()?;
        self.state.going_back(at);
        Ok(())
    }

    fn first_unvisited_assembly_after(&self, step: u32) -> Option<u32> {
        let visited = self.state.visited();
        self.doc
            .doc()
            .assembly_steps()
            .map(|s| s.index)
            .find(|&i| i > step && !visited.contains(&i))
    }

    fn walk_range(&self, step: u32) -> StepRange {
        self.doc
            .doc()
            .innermost_subpart(step)
            .map_or(StepRange(step, step), |s| s.step_range)
    }

    fn maybe_inject_error(&mut self, error_rate: f64) {
        let cur = self.current();
        if !self.is_assembly(cur) || cur >= self.n() || self.injected.contains(&cur) {
            return;
        }
        if self.rng.random::<f64>() < error_rate {
            let moves_left = self.rng.random_range(1..=3);
            self.pending.push(PendingError { step: cur, moves_left });
            self.injected.push(cur);
        }
    }

    fn due_error(&self) -> Option<usize> {
        let cur = self.current();
        if !self.is_assembly(cur) {
            return None;
        }
        self.pending
            .iter()
            .position(|p| p.step != cur && (p.moves_left == 0 || cur == self.n()))
    }

    /// Jump back to the faulty step, inspect, and return.
    fn debug_episode(&mut self, idx: usize, linear_return_probability: f64) -> Result<(), Exhausted> {
        let err = self.pending.remove(idx);
        let origin = self.current();
        if !self.jump_to(err.step, JumpLabel::Debugging)? {
            return Ok(());
        }
        if self.rng.random_bool(0.5) {
            self.overview()?;
        }
        if self.rng.random::<f64>() < linear_return_probability {
            while self.current() < origin {
                self.next()?;
            }
        } else {
            self.going_back()?;
        }
        Ok(())
    }

    /// Pick an unvisited block, earlier catalog entries weighted higher,
    /// and jump to its step.
    fn scan_jump(&mut self) -> Result<Option<u32>, Exhausted> {
        let from = self.current();
        let visited = self.state.visited().clone();
        let catalog = &self.doc.doc().catalog;
        let size = catalog.len();
        let candidates: Vec<(u32, f64)> = catalog
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let target = resolve_jump(from, &b.tag_id, self.doc.index()).ok()?;
                (!visited.contains(&target) && self.is_assembly(target))
                    .then_some((target, (size - i) as f64))
            })
            .collect();
        let total: f64 = candidates.iter().map(|c| c.1).sum();
        if candidates.is_empty() || total <= 0.0 {
            return Ok(None);
        }
        let mut draw = self.rng.random::<f64>() * total;
        let mut target = candidates[candidates.len() - 1].0;
        for (t, w) in &candidates {
            if draw < *w {
                target = *t;
                break;
            }
            draw -= w;
        }
        Ok(self.jump_to(target, JumpLabel::BlockScanning)?.then_some(target))
    }

    /// Linear moves toward the nearest unvisited assembly step.
    fn walk_toward_unvisited(&mut self) -> Result<(), Exhausted> {
        let cur = self.current();
        let visited = self.state.visited();
        let nearest = self
            .doc
            .doc()
            .assembly_steps()
            .map(|s| s.index)
            .filter(|i| !visited.contains(i))
            .min_by_key(|&i| i.abs_diff(cur));
        match nearest {
            Some(t) if t > cur => self.next(),
            Some(_) => self.previous(),
            None => Ok(()),
        }
    }

    fn draw_mode(&mut self, weights: &MixWeights) -> StrategyKind {
        let mut draw = self.rng.random::<f64>();
        for (kind, w) in weights.as_array() {
            if draw < w {
                return kind;
            }
            draw -= w;
        }
        StrategyKind::LinearBaseline
    }
}

/// Drive a fresh voice-armed session over `doc` until every assembly step
/// has been visited (and, for debugging profiles, every mistake revisited).
pub fn simulate(
    doc: Arc<IndexedDocument>,
    profile: &StrategyProfile,
    config: &SimConfig,
) -> Result<SimOutcome, SimError> {
    profile.check()?;
    let n = doc.total_steps();
    let state = NavState::create(
        format!("sim-{}-{}", profile.kind, profile.seed),
        doc.clone(),
        NavConfig {
            trigger_mode: TriggerMode::VoiceArmed,
            arm_window_ms: config.arm_window_ms.max(config.step_ms),
        },
        Some(profile.seed),
        0,
    )
    .map_err(|e| SimError::InvalidDocument(e.to_string()))?;
    let budget = config.budget.unwrap_or(10 * n as usize);
    let mut d = Driver {
        doc,
        state,
        rng: ChaCha8Rng::seed_from_u64(profile.seed),
        now: 0,
        step_ms: config.step_ms.max(2),
        budget,
        used: 0,
        truth: Vec::new(),
        pending: Vec::new(),
        injected: Vec::new(),
    };
    let result = match profile.kind {
        StrategyKind::LinearBaseline => run_linear(&mut d),
        StrategyKind::BlockScanning => run_scanning(&mut d),
        _ => run_mixed(&mut d, profile),
    };
    let outcome = finish(d)?;
    match result {
        Ok(()) => Ok(outcome),
        Err(Exhausted) => Err(SimError::BudgetExhausted {
            budget,
            partial: Box::new(SimOutcome {
                status: SimStatus::BudgetExhausted,
                ..outcome
            }),
        }),
    }
}

fn finish(d: Driver) -> Result<SimOutcome, SimError> {
    let metrics = compute_metrics(d.state.log(), Some(d.doc.doc()))
        .map_err(|e| SimError::InvalidDocument(e.to_string()))?;
    Ok(SimOutcome {
        status: SimStatus::Completed,
        metrics,
        ground_truth: d.truth,
        injected_errors: d.injected,
        final_step: d.state.current_step(),
        final_anchor: d.state.return_anchor(),
        final_visited: d.state.visited().clone(),
        log: d.state.log().to_vec(),
    })
}

fn run_linear(d: &mut Driver) -> Result<(), Exhausted> {
    while !d.complete() && d.current() < d.n() {
        d.next()?;
    }
    Ok(())
}

fn run_scanning(d: &mut Driver) -> Result<(), Exhausted> {
    // leave the opening pages before looking at the blocks
    while !d.is_assembly(d.current()) && d.current() < d.n() {
        d.next()?;
    }
    let mut walk: Option<StepRange> = None;
    while !d.complete() {
        let cur = d.current();
        if let Some(range) = walk {
            let next = cur + 1;
            if range.contains(next) && d.is_assembly(next) && !d.state.visited().contains(&next) {
                d.next()?;
                continue;
            }
        }
        match d.scan_jump()? {
            Some(target) => walk = Some(d.walk_range(target)),
            None => {
                walk = None;
                d.walk_toward_unvisited()?;
            }
        }
    }
    Ok(())
}

/// Selective skipping, debugging and mixed profiles share one loop; the
/// profile decides which behaviours fire at each decision point.
fn run_mixed(d: &mut Driver, profile: &StrategyProfile) -> Result<(), Exhausted> {
    d.maybe_inject_error(match profile.kind {
        StrategyKind::Debugging => profile.error_rate,
        _ => 0.0,
    });
    loop {
        if d.complete() && d.pending.is_empty() {
            return Ok(());
        }
        if let Some(idx) = d.due_error() {
            d.debug_episode(idx, profile.linear_return_probability)?;
            continue;
        }
        let mode = match (profile.kind, profile.weights) {
            (StrategyKind::Mixed, Some(w)) => d.draw_mode(&w),
            (kind, _) => kind,
        };
        let cur = d.current();
        match mode {
            StrategyKind::SelectiveSkipping if !d.is_assembly(cur) => {
                if d.rng.random::<f64>() < profile.skip_probability {
                    if let Some(target) = d.first_unvisited_assembly_after(cur) {
                        if target > cur + 1 && d.jump_to(target, JumpLabel::SelectiveSkipping)? {
                            continue;
                        }
                    }
                }
            }
            StrategyKind::BlockScanning if d.is_assembly(cur) => {
                if d.scan_jump()?.is_some() {
                    continue;
                }
            }
            _ => {}
        }
        if cur < d.n() {
            d.next()?;
            if mode == StrategyKind::Debugging {
                d.maybe_inject_error(profile.error_rate);
            }
        } else if !d.complete() {
            if d.is_assembly(cur) && d.scan_jump()?.is_some() {
                continue;
            }
            d.walk_toward_unvisited()?;
        } else if !d.pending.is_empty() && d.due_error().is_none() {
            // mistakes that can no longer be reached are dropped
            d.pending.clear();
        }
    }
}

/// The commands a session issued, without the start entry.
pub fn issued_commands(log: &[SessionLogEntry]) -> impl Iterator<Item = &Command> {
    log.iter().skip(1).map(|e| &e.command)
}
