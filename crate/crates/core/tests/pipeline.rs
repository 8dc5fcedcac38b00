//! Whole-pipeline properties on small desk-scale suites.

use driftlens::config::Config;
use driftlens::cpm::Adjustment;
use driftlens::embedding::{generate_synthetic_corpus, SyntheticCorpusSpec};
use driftlens::harness::{run_suite, simulate_run, ScenarioKind, ScenarioSpec, ScorerKind, SuiteSpec};

fn suite(kind: ScenarioKind, n_runs: usize, drift_fraction: f64) -> SuiteSpec {
    SuiteSpec {
        n_runs,
        master_seed: 77,
        scenario: ScenarioSpec {
            kind,
            drift_fraction,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn strong_uniform_drift_is_caught_quickly() {
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec {
        intent_spread: 0.3,
        ..Default::default()
    })
    .unwrap();
    // With 14 clean steps before the change, a perfectly separated series
    // needs a fifth drifted step to clear a 5% run-level false-alarm rate
    // under exact calibration, and up to a sixth under Šidák.
    for (adjustment, max_offset) in [(Adjustment::Sidak, 5), (Adjustment::Simulated, 4)] {
        let mut pipeline = Config::default().pipeline();
        pipeline.cpm.adjustment = adjustment;
        let runs = run_suite(&corpus, &suite(ScenarioKind::Uniform, 3, 0.5), &pipeline).unwrap();
        for r in &runs {
            assert!(r.report.detected);
            assert!(r.report.detection_offset.unwrap() <= max_offset, "{adjustment:?} {:?}", r.report);
            assert_eq!(r.report.detection_deviation, Some(0), "{:?}", r.report);
        }
    }
}

#[test]
fn run_invariants_and_determinism() {
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::default()).unwrap();
    let pipeline = Config::default().pipeline();
    let spec = suite(ScenarioKind::Gradual, 4, 0.1);
    let runs = run_suite(&corpus, &spec, &pipeline).unwrap();
    for r in &runs {
        let rep = &r.report;
        if rep.detected {
            assert!(rep.t_p.unwrap() <= rep.t_d.unwrap());
            assert!(rep.detection_offset.is_some() && rep.detection_deviation.is_some());
            let window = r.window_outliers.iter().all(|o| (rep.t_p.unwrap()..=rep.t_d.unwrap()).contains(&o.t));
            assert!(window);
            let i = r.interpretation.as_ref().unwrap();
            assert_eq!(i.clustered_count() + i.unclustered_count, r.window_outliers.len());
        } else {
            assert!(rep.detection_offset.is_none() && rep.recall.is_none());
        }
        assert_eq!(r.series.len(), 30);
    }
    let again = simulate_run(&corpus, &spec, &pipeline, 2).unwrap();
    assert_eq!(again, runs[2]);
}

#[test]
fn autoencoder_detects_at_least_as_often_as_confidence() {
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::default()).unwrap();
    let spec = suite(ScenarioKind::Uniform, 6, 0.1);
    let rate = |scorer: ScorerKind| {
        let p = driftlens::harness::PipelineConfig {
            scorer,
            ..Config::default().pipeline()
        };
        let runs = run_suite(&corpus, &spec, &p).unwrap();
        runs.iter().filter(|r| r.report.detected).count()
    };
    assert!(rate(ScorerKind::Ae) >= rate(ScorerKind::Confidence));
}

#[test]
fn batch_scorers_run_through_the_same_detector() {
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::default()).unwrap();
    for scorer in [ScorerKind::Medoid, ScorerKind::Fid] {
        let p = driftlens::harness::PipelineConfig {
            scorer,
            ..Config::default().pipeline()
        };
        let runs = run_suite(&corpus, &suite(ScenarioKind::Uniform, 2, 0.3), &p).unwrap();
        for r in &runs {
            assert!(r.report.detected, "{scorer:?}");
            assert!(r.interpretation.is_none() && r.window_outliers.is_empty());
        }
    }
}
