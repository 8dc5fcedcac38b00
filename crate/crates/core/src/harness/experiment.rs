//! One end-to-end run: anchor fit, streaming, change-point detection and
//! interpretation.

use serde::{Deserialize, Serialize};

use super::scenario::{GroundTruth, Scenario, ScenarioKind};
use crate::autoencoder::{train_anchor, AutoencoderConfig};
use crate::baselines::{CentroidClassifier, FidScorer, MedoidScorer};
use crate::cpm::{ChangePointReport, CpmConfig, CpmDetector};
use crate::embedding::EmbeddedRequest;
use crate::error::{Error, Result};
use crate::interpret::{coverage_recall, interpret, ClusteringConfig, InterpretationReport};
use crate::stream::{BatchScorer, DetectorConfig, OutlierEntry, SeriesSource, StreamMonitor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Ae,
    Medoid,
    Fid,
    Confidence,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ae => "ae",
            Self::Medoid => "medoid",
            Self::Fid => "fid",
            Self::Confidence => "confidence",
        }
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Ae, Self::Medoid, Self::Fid, Self::Confidence]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scorer {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceConfig {
    /// Softmax temperature over cosine scores.
    pub temperature: f64,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self { temperature: 0.05 }
    }
}

/// Everything downstream of scenario construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scorer: ScorerKind,
    pub detector: DetectorConfig,
    pub cpm: CpmConfig,
    pub autoencoder: AutoencoderConfig,
    pub clustering: ClusteringConfig,
    pub confidence: ConfidenceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::desk(64)
    }
}

impl PipelineConfig {
    pub fn desk(dim: usize) -> Self {
        Self {
            scorer: ScorerKind::Ae,
            detector: DetectorConfig::desk(),
            cpm: CpmConfig::default(),
            autoencoder: AutoencoderConfig::desk(dim),
            clustering: ClusteringConfig::default(),
            confidence: ConfidenceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.cpm.validate()?;
        self.autoencoder.validate()?;
        self.clustering.validate()?;
        if !(self.confidence.temperature > 0.0 && self.confidence.temperature.is_finite()) {
            return Err(Error::InvalidConfig("confidence temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Per-run metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub kind: ScenarioKind,
    pub scorer: ScorerKind,
    pub t_s: usize,
    pub detected: bool,
    pub t_d: Option<usize>,
    pub t_p: Option<usize>,
    /// `|t_d − t_s|`.
    pub detection_offset: Option<usize>,
    /// `|t_p − t_s|`.
    pub detection_deviation: Option<usize>,
    pub drift_rate_at_detection: Option<f64>,
    pub recall: Option<f64>,
    pub n_clusters: Option<usize>,
    pub n_window_outliers: usize,
    pub drift_intents: Vec<String>,
}

impl RunReport {
    pub fn is_false_positive(&self) -> bool {
        !self.kind.is_drift() && self.detected
    }

    pub fn is_false_negative(&self) -> bool {
        self.kind.is_drift() && !self.detected
    }
}

/// One row of the series file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: usize,
    pub s: f64,
    pub true_drift_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub change_point: ChangePointReport,
    pub series: Vec<SeriesPoint>,
    /// Outliers from `t_p` through `t_d`, the input to interpretation.
    pub window_outliers: Vec<OutlierEntry>,
    pub interpretation: Option<InterpretationReport>,
}

enum Scorer {
    Ae(crate::autoencoder::AnchorModel),
    Batch(Box<dyn BatchScorer>),
}

fn fit_scorer(anchor: &[EmbeddedRequest], config: &PipelineConfig, seed: u64) -> Result<Scorer> {
    Ok(match config.scorer {
        ScorerKind::Ae => {
            let vectors: Vec<_> = anchor.iter().map(|r| r.embedding.clone()).collect();
            let ae = AutoencoderConfig {
                input_dim: vectors[0].dim(),
                seed,
                ..config.autoencoder.clone()
            };
            Scorer::Ae(train_anchor(&vectors, &ae)?)
        }
        ScorerKind::Medoid => Scorer::Batch(Box::new(MedoidScorer::new(anchor)?)),
        ScorerKind::Fid => Scorer::Batch(Box::new(FidScorer::new(anchor)?)),
        ScorerKind::Confidence => Scorer::Batch(Box::new(CentroidClassifier::fit(
            anchor,
            config.confidence.temperature,
        )?)),
    })
}

/// Clusters the outliers between the estimated change point and detection.
pub fn interpret_window(
    outliers: &[OutlierEntry],
    clustering: &ClusteringConfig,
    truth: &GroundTruth,
) -> Result<InterpretationReport> {
    let requests: Vec<EmbeddedRequest> = outliers.iter().map(|o| o.request.clone()).collect();
    let drift = (!truth.drift_intents.is_empty()).then_some(&truth.drift_intents);
    if requests.is_empty() {
        let mut empty = InterpretationReport {
            clusters: Vec::new(),
            unclustered_count: 0,
            recall: None,
        };
        if let Some(d) = drift {
            empty.recall = Some(coverage_recall(&empty, d)?);
        }
        return Ok(empty);
    }
    interpret(&requests, clustering, drift)
}

/// Runs the full pipeline on one scenario. `run` and `seed` only label the
/// report and seed the model fit and the permutation tests.
pub fn run_experiment(scenario: &Scenario, config: &PipelineConfig, run: usize, seed: u64) -> Result<RunArtifacts> {
    config.validate()?;
    let anchor = scenario.anchor_requests();
    if anchor.is_empty() {
        return Err(Error::EmptyInput("anchor batches"));
    }
    let scorer = fit_scorer(&anchor, config, seed)?;
    let source = match &scorer {
        Scorer::Ae(model) => SeriesSource::Instance(model),
        Scorer::Batch(b) => SeriesSource::Batch(b.as_ref()),
    };
    let detector_config = DetectorConfig {
        batch_size: scenario.spec.batch_size,
        ..config.detector.clone()
    };
    let mut monitor = StreamMonitor::new(source, detector_config)?;
    let mut cpm = CpmDetector::new(CpmConfig {
        seed,
        ..config.cpm.clone()
    })?;
    for batch in &scenario.stream {
        let s = monitor.process(batch)?.s;
        // The detector freezes once it fires; the stream is still scored so
        // the full series is available for plotting.
        if !cpm.is_detected() {
            cpm.step(batch.t, s)?;
        }
    }
    let change_point = cpm.report().clone();
    let truth = &scenario.truth;
    let series = monitor
        .series()
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| SeriesPoint {
            t: i + 1,
            s,
            true_drift_fraction: truth.fraction_at(i + 1),
        })
        .collect();

    let (window_outliers, interpretation) = match (change_point.t_p, change_point.t_d) {
        (Some(t_p), Some(t_d)) if matches!(scorer, Scorer::Ae(_)) => {
            let window: Vec<OutlierEntry> = monitor.pool().window_entries(t_p, t_d).cloned().collect();
            let report = interpret_window(&window, &config.clustering, truth)?;
            (window, Some(report))
        }
        _ => (Vec::new(), None),
    };

    let report = RunReport {
        run,
        seed,
        kind: scenario.spec.kind,
        scorer: config.scorer,
        t_s: truth.t_s,
        detected: change_point.detected,
        t_d: change_point.t_d,
        t_p: change_point.t_p,
        detection_offset: change_point.t_d.map(|t| t.abs_diff(truth.t_s)),
        detection_deviation: change_point.t_p.map(|t| t.abs_diff(truth.t_s)),
        drift_rate_at_detection: change_point.t_d.map(|t| truth.fraction_at(t)),
        recall: interpretation.as_ref().and_then(|i| i.recall),
        n_clusters: interpretation.as_ref().map(|i| i.clusters.len()),
        n_window_outliers: window_outliers.len(),
        drift_intents: truth.drift_intents.iter().cloned().collect(),
    };
    Ok(RunArtifacts {
        report,
        change_point,
        series,
        window_outliers,
        interpretation,
    })
}
