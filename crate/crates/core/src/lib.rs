//! Flexible-access assembly instructions: documents, a navigation engine
//! mixing step-by-step and block-triggered access, a detection relay, and
//! simulated recognizers and assemblers.

pub mod clock;
pub mod detection;
pub mod index;
pub mod model;
pub mod nav;
pub mod recognizer;
pub mod relay;
pub mod sim;
pub mod validate;

pub use detection::TagDetection;
pub use index::{build_block_index, complexity_metrics, BlockIndex, ComplexityReport};
pub use model::{parse_document, InstructionDocument, StepKind, TagMode};
pub use nav::{IndexedDocument, NavState, TriggerMode};
pub use validate::{validate, ValidationReport};
