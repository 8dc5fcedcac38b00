//! Batching, per-batch scoring and the outlier pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::AnchorModel;
use crate::embedding::EmbeddedRequest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// 1-based time step.
    pub t: usize,
    pub requests: Vec<EmbeddedRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub batch_size: usize,
    pub gamma: f64,
    pub aggregation: Aggregation,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            batch_size: 5000,
            gamma: 0.775,
            aggregation: Aggregation::Mean,
        }
    }
}

impl DetectorConfig {
    pub fn desk() -> Self {
        Self {
            batch_size: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Splits a stream into full batches of `batch_size`, in order. A trailing
/// partial batch is dropped.
pub fn batchify(stream: &[EmbeddedRequest], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let dropped = stream.len() % batch_size;
    if dropped > 0 {
        log::warn!("dropping {dropped} trailing requests that do not fill a batch of {batch_size}");
    }
    stream
        .chunks_exact(batch_size)
        .enumerate()
        .map(|(i, chunk)| Batch {
            t: i + 1,
            requests: chunk.to_vec(),
        })
        .collect()
}

/// Anything that scores a single request's similarity to the anchor.
pub trait RequestScorer: Sync {
    fn similarity(&self, request: &EmbeddedRequest) -> Result<f64>;
}

impl RequestScorer for AnchorModel {
    fn similarity(&self, request: &EmbeddedRequest) -> Result<f64> {
        self.reconstruction_similarity(&request.embedding)
    }
}

/// Scores a batch as a whole (dataset-similarity baselines).
pub trait BatchScorer: Sync {
    fn score(&self, batch: &[EmbeddedRequest]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierEntry {
    pub t: usize,
    pub request: EmbeddedRequest,
    pub similarity: f64,
}

/// Time-ordered store of requests scored below `gamma`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutlierPool {
    entries: Vec<OutlierEntry>,
}

impl OutlierPool {
    pub fn entries(&self) -> &[OutlierEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends entries for step `t`. Steps must not go backwards.
    pub fn extend(&mut self, t: usize, entries: impl IntoIterator<Item = OutlierEntry>) {
        if let Some(last) = self.entries.last() {
            assert!(t >= last.t, "outlier pool must be filled in time order");
        }
        self.entries.extend(entries);
    }

    /// Requests with `t_from <= t <= t_to`, in stream order.
    pub fn outliers_in_window(&self, t_from: usize, t_to: usize) -> Vec<EmbeddedRequest> {
        self.window_entries(t_from, t_to)
            .map(|e| e.request.clone())
            .collect()
    }

    pub fn window_entries(&self, t_from: usize, t_to: usize) -> impl Iterator<Item = &OutlierEntry> {
        self.entries
            .iter()
            .filter(move |e| e.t >= t_from && e.t <= t_to)
    }
}

/// Append-only series of per-batch similarities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySeries {
    values: Vec<f64>,
}

impl SimilaritySeries {
    pub fn push(&mut self, s: f64) -> Result<()> {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                index: self.values.len() + 1,
            });
        }
        self.values.push(s);
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of scoring one batch with an instance-level scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScore {
    pub t: usize,
    pub s: f64,
    pub similarities: Vec<f64>,
    pub outliers: Vec<OutlierEntry>,
}

/// One line of the batch report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub t: usize,
    pub s: f64,
    pub n_outliers: usize,
    pub outlier_ids: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Scores every request of `batch`; `s` is the mean similarity and requests
/// strictly below `gamma` are outliers.
pub fn score_batch(scorer: &dyn RequestScorer, batch: &Batch, config: &DetectorConfig) -> Result<BatchScore> {
    if batch.requests.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let similarities = batch
        .requests
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            scorer.similarity(r).map_err(|e| match e {
                Error::DimensionMismatch { expected, found, .. } => Error::DimensionMismatch {
                    index: i,
                    expected,
                    found,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let s = match config.aggregation {
        Aggregation::Mean => mean(&similarities),
    };
    let outliers = batch
        .requests
        .iter()
        .zip(&similarities)
        .filter(|(_, &sim)| sim < config.gamma)
        .map(|(r, &sim)| OutlierEntry {
            t: batch.t,
            request: r.clone(),
            similarity: sim,
        })
        .collect();
    Ok(BatchScore {
        t: batch.t,
        s,
        similarities,
        outliers,
    })
}

/// How a monitor turns batches into series observations.
#[derive(Clone, Copy)]
pub enum SeriesSource<'a> {
    /// Per-request similarity; fills the outlier pool.
    Instance(&'a dyn RequestScorer),
    /// Whole-batch similarity; no outliers.
    Batch(&'a dyn BatchScorer),
}

/// Stateful scorer over a stream of batches, committed strictly in time order.
pub struct StreamMonitor<'a> {
    source: SeriesSource<'a>,
    config: DetectorConfig,
    pool: OutlierPool,
    series: SimilaritySeries,
    reports: Vec<BatchReport>,
}

impl<'a> StreamMonitor<'a> {
    pub fn new(source: SeriesSource<'a>, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            source,
            config,
            pool: OutlierPool::default(),
            series: SimilaritySeries::default(),
            reports: Vec::new(),
        })
    }

    pub fn process(&mut self, batch: &Batch) -> Result<&BatchReport> {
        let expected = self.series.len() + 1;
        if batch.t != expected {
            return Err(Error::OutOfOrder {
                expected,
                got: batch.t,
            });
        }
        let report = match self.source {
            SeriesSource::Instance(scorer) => {
                let score = score_batch(scorer, batch, &self.config)?;
                let ids = score.outliers.iter().map(|o| o.request.id.clone()).collect();
                self.series.push(score.s)?;
                self.pool.extend(batch.t, score.outliers);
                BatchReport {
                    t: batch.t,
                    s: score.s,
                    n_outliers: self.pool.window_entries(batch.t, batch.t).count(),
                    outlier_ids: ids,
                }
            }
            SeriesSource::Batch(scorer) => {
                let s = scorer.score(&batch.requests)?;
                self.series.push(s)?;
                BatchReport {
                    t: batch.t,
                    s,
                    n_outliers: 0,
                    outlier_ids: Vec::new(),
                }
            }
        };
        self.reports.push(report);
        Ok(self.reports.last().expect("just pushed"))
    }

    pub fn pool(&self) -> &OutlierPool {
        &self.pool
    }

    pub fn series(&self) -> &SimilaritySeries {
        &self.series
    }

    pub fn reports(&self) -> &[BatchReport] {
        &self.reports
    }

    pub fn into_parts(self) -> (SimilaritySeries, OutlierPool, Vec<BatchReport>) {
        (self.series, self.pool, self.reports)
    }
}
