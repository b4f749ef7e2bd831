//! Scoring, result aggregation and the repeated-run experiment driver.

pub mod experiment;
pub mod metrics;
pub mod results;

pub use experiment::{
    run_experiment, run_experiment_partial, run_experiment_with, ExperimentOutput, ExperimentPlan, PartialOutput, Prediction,
    RunOutput,
};
pub use metrics::{confusion, macro_prf, ConfusionMatrix, LabelScores, MacroScores};
pub use results::{per_emotion_report, percent, AboveAsIs, PerEmotionReport, ResultRow, ResultsAccumulator, ResultsTable};
