//! Stream-ready corpus construction: length-stratified upsampling and the
//! held-out drift-intent split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedRequest;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

const REFERENCE_LENGTHS_JSON: &str = include_str!("../data/reference_lengths.json");

/// Probability of each token length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub probs: BTreeMap<usize, f64>,
}

impl LengthDistribution {
    pub fn new(probs: BTreeMap<usize, f64>) -> Result<Self> {
        let d = Self { probs };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InvalidConfig("length distribution is empty".into()));
        }
        if self.probs.contains_key(&0) {
            return Err(Error::InvalidConfig("token lengths must be positive".into()));
        }
        if self.probs.values().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("probabilities must be finite and ≥ 0".into()));
        }
        let total: f64 = self.probs.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    /// The bundled reference distribution of production request lengths.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_LENGTHS_JSON).expect("bundled distribution parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Self = serde_json::from_str(&text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn prob(&self, length: usize) -> f64 {
        self.probs.get(&length).copied().unwrap_or(0.0)
    }

    /// Mass on lengths up to and including `length`.
    pub fn cumulative(&self, length: usize) -> f64 {
        self.probs.range(..=length).map(|(_, p)| p).sum()
    }

    /// Total-variation distance to `other`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let keys: BTreeSet<usize> = self.probs.keys().chain(other.probs.keys()).copied().collect();
        0.5 * keys.iter().map(|&k| (self.prob(k) - other.prob(k)).abs()).sum::<f64>()
    }
}

/// Empirical token-length frequencies.
pub fn estimate_length_distribution(corpus: &[EmbeddedRequest]) -> Result<LengthDistribution> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in corpus {
        *counts.entry(r.token_length).or_default() += 1;
    }
    let n = corpus.len() as f64;
    Ok(LengthDistribution {
        probs: counts.into_iter().map(|(l, c)| (l, c as f64 / n)).collect(),
    })
}

/// What to do when the corpus has no utterance of a length the target
/// distribution asks for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyStratumPolicy {
    Fail,
    /// Move the mass to the nearest populated length(s), split in proportion
    /// to their own target mass.
    #[default]
    Redistribute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleSpec {
    pub target_size: usize,
    pub distribution: LengthDistribution,
    pub seed: u64,
    pub empty_stratum: EmptyStratumPolicy,
}

impl UpsampleSpec {
    pub const DESK_TARGET_SIZE: usize = 50_000;

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::InvalidConfig("target_size must be ≥ 1".into()));
        }
        self.distribution.validate()
    }
}

/// Target distribution restricted to the populated lengths.
fn effective_distribution(
    target: &LengthDistribution,
    populated: &BTreeSet<usize>,
    policy: EmptyStratumPolicy,
) -> Result<BTreeMap<usize, f64>> {
    let mut out: BTreeMap<usize, f64> = target
        .probs
        .iter()
        .filter(|(l, p)| **p > 0.0 && populated.contains(l))
        .map(|(&l, &p)| (l, p))
        .collect();
    for (&length, &p) in &target.probs {
        if p <= 0.0 || populated.contains(&length) {
            continue;
        }
        if policy == EmptyStratumPolicy::Fail {
            return Err(Error::EmptyStratum { length });
        }
        let dist = populated.iter().map(|&l| l.abs_diff(length)).min().expect("non-empty corpus");
        let nearest: Vec<usize> = populated.iter().copied().filter(|l| l.abs_diff(length) == dist).collect();
        let weights: Vec<f64> = nearest.iter().map(|l| target.prob(*l)).collect();
        let total: f64 = weights.iter().sum();
        log::warn!("no utterance of length {length}; moving mass {p} to lengths {nearest:?}");
        for (l, w) in nearest.iter().zip(&weights) {
            let share = if total > 0.0 { w / total } else { 1.0 / nearest.len() as f64 };
            *out.entry(*l).or_default() += p * share;
        }
    }
    Ok(out)
}

/// Draws `target_size` requests whose lengths follow the target distribution.
///
/// Each slot draws a length, then a uniform member of that length's stratum.
/// Output ids are `"{source}#{slot}"` with the source id recorded; embeddings
/// are shared with the source rows.
pub fn upsample(corpus: &[EmbeddedRequest], spec: &UpsampleSpec) -> Result<Vec<EmbeddedRequest>> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut strata: BTreeMap<usize, Vec<&EmbeddedRequest>> = BTreeMap::new();
    for r in corpus {
        strata.entry(r.token_length).or_default().push(r);
    }
    let populated: BTreeSet<usize> = strata.keys().copied().collect();
    let effective = effective_distribution(&spec.distribution, &populated, spec.empty_stratum)?;
    let lengths: Vec<usize> = effective.keys().copied().collect();
    let weights = WeightedIndex::new(effective.values().copied())
        .map_err(|e| Error::InvalidConfig(format!("length weights: {e}")))?;

    let mut rng = rng_from(spec.seed, &[stream::UPSAMPLE]);
    let width = spec.target_size.to_string().len();
    let mut out = Vec::with_capacity(spec.target_size);
    for slot in 0..spec.target_size {
        let stratum = &strata[&lengths[weights.sample(&mut rng)]];
        let src = stratum[rng.random_range(0..stratum.len())];
        let mut r = src.clone();
        r.id = format!("{}#{slot:0width$}", src.id);
        r.source_id = Some(src.source_id.clone().unwrap_or_else(|| src.id.clone()));
        out.push(r);
    }
    Ok(out)
}

/// A corpus split into seed intents and held-out drift intents.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub seed_corpus: Vec<EmbeddedRequest>,
    pub drift_corpus: Vec<EmbeddedRequest>,
    pub drift_intents: BTreeSet<String>,
}

/// Number of held-out intents: `round_half_up(n · fraction)`, at least 1 and
/// at most `n − 1`.
pub fn holdout_count(n_intents: usize, fraction: f64) -> usize {
    let k = (n_intents as f64 * fraction + 0.5).floor() as usize;
    k.max(1).min(n_intents.saturating_sub(1))
}

/// Holds out a random subset of intents, with all their requests.
pub fn holdout_split(corpus: &[EmbeddedRequest], drift_fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(drift_fraction > 0.0 && drift_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "drift fraction must be in (0, 1), got {drift_fraction}"
        )));
    }
    let mut intents = BTreeSet::new();
    for (index, r) in corpus.iter().enumerate() {
        match &r.intent {
            Some(l) => {
                intents.insert(l.as_str());
            }
            None => {
                return Err(Error::Format {
                    kind: "corpus",
                    index,
                    message: "holdout needs an intent label on every request".into(),
                })
            }
        }
    }
    if intents.len() < 2 {
        return Err(Error::InsufficientCorpus {
            what: "intents",
            needed: 2,
            available: intents.len(),
        });
    }
    let mut order: Vec<&str> = intents.into_iter().collect();
    let k = holdout_count(order.len(), drift_fraction);
    order.shuffle(&mut rng_from(seed, &[stream::HOLDOUT]));
    let drift_intents: BTreeSet<String> = order[..k].iter().map(|s| s.to_string()).collect();
    let (drift_corpus, seed_corpus) = corpus
        .iter()
        .cloned()
        .partition(|r| drift_intents.contains(r.intent.as_deref().unwrap_or_default()));
    Ok(HoldoutSplit {
        seed_corpus,
        drift_corpus,
        drift_intents,
    })
}
