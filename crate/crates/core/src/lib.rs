//! Role-aware ablation harness for emotion classification.
//!
//! Corpora annotated with emotion roles (experiencer, cue, target, stimulus)
//! are transformed under four input settings (As-Is, Only, Without,
//! Position), classifiers are trained per setting, and the resulting scores
//! are compared against the As-Is baseline.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod transform;

pub use corpus::{AnnotatedInstance, Corpus, RoleKind, Span};
pub use error::{Error, Result};
pub use transform::{AbsentPolicy, Setting, SpecialTokens, TransformedInstance};
pub use eval::{run_experiment, ConfusionMatrix, ExperimentPlan, MacroScores, ResultsTable};
pub use model::{predict, train, BackendId, ClassifierModel, EmbeddingTable, OovPolicy, TrainConfig};
pub use synth::{generate, SynthSpec};
