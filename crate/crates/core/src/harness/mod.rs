//! Drift simulation, end-to-end runs and evaluation.

mod experiment;
pub mod output;
mod scenario;
mod suite;

pub use experiment::{
    interpret_window, run_experiment, ConfidenceConfig, PipelineConfig, RunArtifacts, RunReport, ScorerKind,
    SeriesPoint,
};
pub use scenario::{build_scenario, GroundTruth, Scenario, ScenarioKind, ScenarioSpec};
pub use suite::{run_seed, run_suite, simulate_run, Aggregate, EvaluationReport, SuiteSpec};
