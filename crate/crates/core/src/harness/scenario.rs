//! Drift-scenario construction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedRequest;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream, DetRng};
use crate::stream::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Gradual,
    Uniform,
    None,
    Anomaly,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Gradual, Self::Uniform, Self::None, Self::Anomaly];

    /// Kinds whose streams contain a lasting change.
    pub fn is_drift(self) -> bool {
        matches!(self, Self::Gradual | Self::Uniform)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gradual => "gradual",
            Self::Uniform => "uniform",
            Self::None => "none",
            Self::Anomaly => "anomaly",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Streamed batches, after the anchor batches.
    pub n_batches: usize,
    pub anchor_batches: usize,
    pub batch_size: usize,
    /// First drifted step, 1-based.
    pub drift_start: usize,
    /// Per-step increase of the drift fraction for `gradual`.
    pub ramp: f64,
    /// Drift fraction for `uniform` and `anomaly`.
    pub drift_fraction: f64,
    pub anomaly_span: usize,
    /// Reuse requests once a corpus is exhausted instead of failing.
    pub with_replacement: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Uniform,
            n_batches: 30,
            anchor_batches: 2,
            batch_size: 200,
            drift_start: 15,
            ramp: 0.005,
            drift_fraction: 0.1,
            anomaly_span: 2,
            with_replacement: true,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_batches == 0 || self.batch_size == 0 {
            return bad("n_batches and batch_size must be ≥ 1".into());
        }
        if self.anchor_batches == 0 {
            return bad("anchor_batches must be ≥ 1".into());
        }
        if !(1..=self.n_batches).contains(&self.drift_start) {
            return bad(format!("drift_start must lie in [1, {}]", self.n_batches));
        }
        if !(0.0..=1.0).contains(&self.ramp) || !(0.0..=1.0).contains(&self.drift_fraction) {
            return bad("ramp and drift_fraction must lie in [0, 1]".into());
        }
        if self.kind == ScenarioKind::Anomaly && self.anomaly_span == 0 {
            return bad("anomaly_span must be ≥ 1".into());
        }
        Ok(())
    }

    /// Nominal drift fraction at stream step `t`.
    pub fn fraction_at(&self, t: usize) -> f64 {
        if t < self.drift_start {
            return 0.0;
        }
        let k = t - self.drift_start;
        match self.kind {
            ScenarioKind::None => 0.0,
            ScenarioKind::Uniform => self.drift_fraction,
            ScenarioKind::Gradual => (self.ramp * (k + 1) as f64).min(1.0),
            ScenarioKind::Anomaly if k < self.anomaly_span => self.drift_fraction,
            ScenarioKind::Anomaly => 0.0,
        }
    }

    /// Drift requests in a batch: `round_half_up(B · fraction)`.
    pub fn drift_count_at(&self, t: usize) -> usize {
        ((self.batch_size as f64 * self.fraction_at(t) + 0.5).floor() as usize).min(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_s: usize,
    pub drift_intents: BTreeSet<String>,
    /// Drift requests per stream batch, index `t − 1`.
    pub drift_counts: Vec<usize>,
    pub batch_size: usize,
}

impl GroundTruth {
    /// Realised drift share of batch `t`.
    pub fn fraction_at(&self, t: usize) -> f64 {
        self.drift_counts[t - 1] as f64 / self.batch_size as f64
    }

    pub fn total_injected(&self) -> usize {
        self.drift_counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub anchor: Vec<Batch>,
    pub stream: Vec<Batch>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn anchor_requests(&self) -> Vec<EmbeddedRequest> {
        self.anchor.iter().flat_map(|b| b.requests.iter().cloned()).collect()
    }
}

/// Draws from a corpus without replacement, reshuffling and tagging reused
/// copies with fresh ids once exhausted.
struct Sampler<'a> {
    corpus: &'a [EmbeddedRequest],
    order: Vec<usize>,
    next: usize,
    pass: usize,
    with_replacement: bool,
    what: &'static str,
}

impl<'a> Sampler<'a> {
    fn new(corpus: &'a [EmbeddedRequest], with_replacement: bool, what: &'static str, rng: &mut DetRng) -> Self {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(rng);
        Self {
            corpus,
            order,
            next: 0,
            pass: 0,
            with_replacement,
            what,
        }
    }

    fn draw(&mut self, n: usize, needed: usize, rng: &mut DetRng, out: &mut Vec<EmbeddedRequest>) -> Result<()> {
        for _ in 0..n {
            if self.next == self.order.len() {
                if !self.with_replacement || self.corpus.is_empty() {
                    return Err(Error::InsufficientCorpus {
                        what: self.what,
                        needed,
                        available: self.corpus.len(),
                    });
                }
                self.pass += 1;
                self.next = 0;
                self.order.shuffle(rng);
                log::info!("{} corpus exhausted; reusing requests (pass {})", self.what, self.pass + 1);
            }
            let src = &self.corpus[self.order[self.next]];
            self.next += 1;
            let mut r = src.clone();
            if self.pass > 0 {
                r.id = format!("{}~{}", src.id, self.pass);
                r.source_id = Some(src.source_id.clone().unwrap_or_else(|| src.id.clone()));
            }
            out.push(r);
        }
        Ok(())
    }
}

/// Builds anchor and stream batches with drift injected per `spec`.
///
/// Seed requests are drawn without replacement across all batches, anchors
/// first, so the stream never repeats anchor requests unless the corpus runs
/// out. Drift requests replace seed requests, and each batch is shuffled.
pub fn build_scenario(
    seed_corpus: &[EmbeddedRequest],
    drift_corpus: &[EmbeddedRequest],
    spec: &ScenarioSpec,
) -> Result<Scenario> {
    spec.validate()?;
    if seed_corpus.is_empty() {
        return Err(Error::EmptyInput("seed corpus"));
    }
    let seed_intents: BTreeSet<&str> = seed_corpus.iter().filter_map(|r| r.intent.as_deref()).collect();
    let drift_intents: BTreeSet<String> = drift_corpus.iter().filter_map(|r| r.intent.clone()).collect();
    if let Some(shared) = drift_intents.iter().find(|l| seed_intents.contains(l.as_str())) {
        return Err(Error::InvalidConfig(format!(
            "intent {shared:?} is in both the seed and the drift corpus"
        )));
    }

    let drift_counts: Vec<usize> = (1..=spec.n_batches).map(|t| spec.drift_count_at(t)).collect();
    let total_drift: usize = drift_counts.iter().sum();
    if total_drift > 0 && drift_corpus.is_empty() {
        return Err(Error::EmptyInput("drift corpus"));
    }
    let total_seed = spec.batch_size * (spec.anchor_batches + spec.n_batches) - total_drift;

    let mut rng = rng_from(spec.seed, &[stream::SCENARIO]);
    let mut seeds = Sampler::new(seed_corpus, spec.with_replacement, "seed", &mut rng);
    let mut drifts = Sampler::new(drift_corpus, spec.with_replacement, "drift", &mut rng);

    let mut anchor = Vec::with_capacity(spec.anchor_batches);
    for t in 1..=spec.anchor_batches {
        let mut requests = Vec::with_capacity(spec.batch_size);
        seeds.draw(spec.batch_size, total_seed, &mut rng, &mut requests)?;
        anchor.push(Batch { t, requests });
    }
    let mut batches = Vec::with_capacity(spec.n_batches);
    for (i, &n_drift) in drift_counts.iter().enumerate() {
        let mut requests = Vec::with_capacity(spec.batch_size);
        seeds.draw(spec.batch_size - n_drift, total_seed, &mut rng, &mut requests)?;
        drifts.draw(n_drift, total_drift, &mut rng, &mut requests)?;
        requests.shuffle(&mut rng);
        batches.push(Batch { t: i + 1, requests });
    }
    Ok(Scenario {
        spec: spec.clone(),
        anchor,
        stream: batches,
        truth: GroundTruth {
            t_s: spec.drift_start,
            drift_intents,
            drift_counts,
            batch_size: spec.batch_size,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use proptest::prelude::*;

    fn corpus(prefix: &str, intents: usize, per: usize) -> Vec<EmbeddedRequest> {
        (0..intents)
            .flat_map(|i| {
                (0..per).map(move |j| {
                    EmbeddedRequest::new(
                        format!("{prefix}{i}-{j}"),
                        "text",
                        Some(format!("{prefix}{i}")),
                        EmbeddingVector::from_raw(vec![1.0, i as f64]).unwrap(),
                    )
                })
            })
            .collect()
    }

    fn drift_in(b: &Batch, drift: &BTreeSet<String>) -> usize {
        b.requests
            .iter()
            .filter(|r| drift.contains(r.intent.as_deref().unwrap()))
            .count()
    }

    #[test]
    fn none_has_no_drift() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::None,
            ..Default::default()
        };
        let s = build_scenario(&corpus("s", 38, 200), &corpus("d", 2, 200), &spec).unwrap();
        assert!(s.truth.drift_counts.iter().all(|&c| c == 0));
        assert_eq!(s.stream.len(), 30);
        assert_eq!(s.anchor.len(), 2);
    }

    #[test]
    fn uniform_counts() {
        let spec = ScenarioSpec::default();
        let s = build_scenario(&corpus("s", 38, 200), &corpus("d", 2, 200), &spec).unwrap();
        for b in &s.stream {
            let expect = if b.t >= 15 { 20 } else { 0 };
            assert_eq!(drift_in(b, &s.truth.drift_intents), expect, "t={}", b.t);
            assert_eq!(b.requests.len(), 200);
        }
        for b in &s.anchor {
            assert_eq!(drift_in(b, &s.truth.drift_intents), 0);
        }
    }

    #[test]
    fn gradual_fraction() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Gradual,
            ramp: 0.005,
            ..Default::default()
        };
        assert!((spec.fraction_at(18) - 0.02).abs() < 1e-12);
        assert_eq!(spec.fraction_at(14), 0.0);
        let capped = ScenarioSpec { ramp: 0.5, ..spec };
        assert_eq!(capped.fraction_at(30), 1.0);
    }

    #[test]
    fn anomaly_window() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Anomaly,
            ..Default::default()
        };
        let fr: Vec<f64> = (13..=18).map(|t| spec.fraction_at(t)).collect();
        assert_eq!(fr, vec![0.0, 0.0, 0.1, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn anchors_disjoint_from_stream() {
        let s = build_scenario(&corpus("s", 38, 200), &corpus("d", 2, 200), &ScenarioSpec::default()).unwrap();
        let anchor: BTreeSet<_> = s.anchor_requests().into_iter().map(|r| r.id).collect();
        assert!(s.stream.iter().flat_map(|b| &b.requests).all(|r| !anchor.contains(&r.id)));
    }

    #[test]
    fn exhaustion() {
        let spec = ScenarioSpec {
            with_replacement: false,
            ..Default::default()
        };
        let err = build_scenario(&corpus("s", 2, 10), &corpus("d", 1, 10), &spec).unwrap_err();
        assert!(matches!(err, Error::InsufficientCorpus { .. }));
        let spec = ScenarioSpec::default();
        let s = build_scenario(&corpus("s", 2, 10), &corpus("d", 1, 10), &spec).unwrap();
        let ids: BTreeSet<_> = s.stream.iter().flat_map(|b| &b.requests).map(|r| r.id.clone()).collect();
        assert_eq!(ids.len(), 30 * 200);
    }

    #[test]
    fn overlapping_intents_rejected() {
        let c = corpus("s", 3, 5);
        assert!(build_scenario(&c, &c[..5], &ScenarioSpec::default()).is_err());
        let bad = ScenarioSpec {
            drift_start: 31,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bookkeeping_and_determinism(seed in any::<u64>(), kind in 0usize..4, frac in 0.0f64..0.6, ramp in 0.0f64..0.1) {
            let spec = ScenarioSpec {
                kind: ScenarioKind::ALL[kind],
                drift_fraction: frac,
                ramp,
                batch_size: 50,
                seed,
                ..Default::default()
            };
            let seeds = corpus("s", 10, 100);
            let drift = corpus("d", 2, 100);
            let s = build_scenario(&seeds, &drift, &spec).unwrap();
            let injected: usize = s.stream.iter().map(|b| drift_in(b, &s.truth.drift_intents)).sum();
            prop_assert_eq!(injected, s.truth.total_injected());
            for b in &s.stream {
                prop_assert_eq!(drift_in(b, &s.truth.drift_intents), s.truth.drift_counts[b.t - 1]);
            }
            prop_assert_eq!(&s, &build_scenario(&seeds, &drift, &spec).unwrap());
        }
    }
}
