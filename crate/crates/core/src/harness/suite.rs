//! Repeated seeded runs and their aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, PipelineConfig, RunArtifacts, RunReport};
use super::scenario::{build_scenario, ScenarioSpec};
use crate::dataset::holdout_split;
use crate::embedding::EmbeddedRequest;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub n_runs: usize,
    pub master_seed: u64,
    /// Share of intents held out as drift intents in every run.
    pub holdout_fraction: f64,
    pub scenario: ScenarioSpec,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            n_runs: 100,
            master_seed: 0,
            holdout_fraction: 0.05,
            scenario: ScenarioSpec::default(),
        }
    }
}

/// Seed of run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, &[stream::RUN, run as u64])
}

/// Holds out drift intents, builds the scenario and runs the pipeline for one
/// run of a suite.
pub fn simulate_run(
    corpus: &[EmbeddedRequest],
    suite: &SuiteSpec,
    pipeline: &PipelineConfig,
    run: usize,
) -> Result<RunArtifacts> {
    let seed = run_seed(suite.master_seed, run);
    let split = holdout_split(corpus, suite.holdout_fraction, seed)?;
    let spec = ScenarioSpec {
        seed,
        ..suite.scenario.clone()
    };
    let scenario = build_scenario(&split.seed_corpus, &split.drift_corpus, &spec)?;
    run_experiment(&scenario, pipeline, run, seed)
}

/// Runs `n_runs` independent simulations in parallel; results are in run
/// order regardless of scheduling.
pub fn run_suite(corpus: &[EmbeddedRequest], suite: &SuiteSpec, pipeline: &PipelineConfig) -> Result<Vec<RunArtifacts>> {
    if suite.n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be ≥ 1".into()));
    }
    suite.scenario.validate()?;
    pipeline.validate()?;
    (0..suite.n_runs)
        .into_par_iter()
        .map(|run| simulate_run(corpus, suite, pipeline, run))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_runs: usize,
    pub n_detected: usize,
    pub detection_rate: f64,
    /// Share of no-drift and anomaly runs that fired.
    pub fp_rate: Option<f64>,
    /// Share of gradual and uniform runs that never fired.
    pub fn_rate: Option<f64>,
    pub mean_detection_offset: Option<f64>,
    pub mean_detection_deviation: Option<f64>,
    pub mean_drift_rate_at_detection: Option<f64>,
    pub mean_recall: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

impl Aggregate {
    /// Means are over the runs where the metric exists (detected runs, or
    /// runs with an interpretation for recall).
    pub fn from_runs(runs: &[RunReport]) -> Self {
        let n_detected = runs.iter().filter(|r| r.detected).count();
        let clean: Vec<&RunReport> = runs.iter().filter(|r| !r.kind.is_drift()).collect();
        let drifted: Vec<&RunReport> = runs.iter().filter(|r| r.kind.is_drift()).collect();
        let rate = |hits: usize, of: usize| (of > 0).then(|| hits as f64 / of as f64);
        Self {
            n_runs: runs.len(),
            n_detected,
            detection_rate: if runs.is_empty() { 0.0 } else { n_detected as f64 / runs.len() as f64 },
            fp_rate: rate(clean.iter().filter(|r| r.detected).count(), clean.len()),
            fn_rate: rate(drifted.iter().filter(|r| !r.detected).count(), drifted.len()),
            mean_detection_offset: mean(runs.iter().filter_map(|r| r.detection_offset.map(|v| v as f64))),
            mean_detection_deviation: mean(runs.iter().filter_map(|r| r.detection_deviation.map(|v| v as f64))),
            mean_drift_rate_at_detection: mean(runs.iter().filter_map(|r| r.drift_rate_at_detection)),
            mean_recall: mean(runs.iter().filter_map(|r| r.recall)),
        }
    }
}

/// The `report.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub runs: Vec<RunReport>,
    pub aggregate: Aggregate,
}

impl EvaluationReport {
    pub fn new(runs: Vec<RunReport>) -> Self {
        let aggregate = Aggregate::from_runs(&runs);
        Self { runs, aggregate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ScenarioKind, ScorerKind};

    fn run(kind: ScenarioKind, detected: bool, t_d: usize) -> RunReport {
        RunReport {
            run: 0,
            seed: 0,
            kind,
            scorer: ScorerKind::Ae,
            t_s: 15,
            detected,
            t_d: detected.then_some(t_d),
            t_p: detected.then_some(15),
            detection_offset: detected.then(|| t_d.abs_diff(15)),
            detection_deviation: detected.then_some(0),
            drift_rate_at_detection: detected.then_some(0.1),
            recall: detected.then_some(0.5),
            n_clusters: None,
            n_window_outliers: 0,
            drift_intents: vec![],
        }
    }

    #[test]
    fn aggregate_of_one_run_is_the_run() {
        let r = run(ScenarioKind::Uniform, true, 18);
        let a = Aggregate::from_runs(std::slice::from_ref(&r));
        assert_eq!(a.n_runs, 1);
        assert_eq!(a.detection_rate, 1.0);
        assert_eq!(a.mean_detection_offset, Some(3.0));
        assert_eq!(a.mean_detection_deviation, Some(0.0));
        assert_eq!(a.mean_drift_rate_at_detection, Some(0.1));
        assert_eq!(a.mean_recall, Some(0.5));
        assert_eq!(a.fn_rate, Some(0.0));
        assert_eq!(a.fp_rate, None);
    }

    #[test]
    fn fp_and_fn_use_their_kinds_only() {
        let runs = vec![
            run(ScenarioKind::None, true, 5),
            run(ScenarioKind::Anomaly, false, 0),
            run(ScenarioKind::Gradual, false, 0),
            run(ScenarioKind::Uniform, true, 16),
        ];
        let a = Aggregate::from_runs(&runs);
        assert_eq!(a.fp_rate, Some(0.5));
        assert_eq!(a.fn_rate, Some(0.5));
        assert!(runs[0].is_false_positive() && runs[2].is_false_negative());
        let drifted = runs.iter().filter(|r| r.kind.is_drift());
        let (fns, hits) = drifted.fold((0, 0), |(f, h), r| (f + r.is_false_negative() as usize, h + r.detected as usize));
        assert_eq!(fns + hits, 2);
    }

    #[test]
    fn run_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<_> = (0..100).map(|i| run_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
