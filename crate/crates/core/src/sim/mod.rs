//! Simulated assemblers, session metrics and jump classification.

mod assembler;
pub mod batch;
mod classify;
mod metrics;

pub use self::assembler::{
    issued_commands, simulate, MixWeights, SimConfig, SimError, SimOutcome, SimStatus,
    StrategyKind, StrategyProfile, SIM_DEVICE_ID,
};
pub use self::classify::{
    classify_jumps, ClassifyError, ConfusionMatrix, JumpLabel, LabeledJump, DEBUG_LOOKAHEAD,
};
pub use self::metrics::{compute_metrics, metrics_csv, MalformedLog, Metrics};
