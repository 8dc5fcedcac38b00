//! Seeded synthetic intent corpora.
//!
//! Each intent owns a centroid on the unit sphere; its requests are the
//! centroid plus isotropic Gaussian noise of scale `intent_spread`, then
//! normalized. Intents may be grouped into families whose centroids share a
//! common direction, which models topics that sit close to one another in
//! embedding space. Texts are templated strings built from the intent's two
//! name words, so cluster naming can be checked against the label.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddedRequest, EmbeddingVector};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream, DetRng};

const MAX_CENTROID_ATTEMPTS: usize = 10_000;

const FAMILY_WORDS: &[&str] = &[
    "account", "card", "order", "payment", "insurance", "flight", "hotel", "loan", "balance",
    "reward", "transfer", "password", "address", "delivery", "refund", "subscription", "invoice",
    "phone", "internet", "warranty", "pension", "mortgage", "ticket", "booking", "parcel",
    "salary", "tax", "credit", "debit", "savings", "checking", "statement", "pin", "device",
    "router", "meter", "vehicle", "license", "passport", "visa", "coupon", "gift", "membership",
    "appointment", "prescription", "claim", "policy", "deposit", "withdrawal", "exchange",
];

const INTENT_WORDS: &[&str] = &[
    "status", "limit", "rate", "history", "cancel", "change", "renew", "activate", "freeze",
    "replace", "update", "report", "dispute", "schedule", "tracking", "fees", "options",
    "balance", "details", "request", "reset", "upgrade", "delay", "return", "points", "bonus",
    "expiry", "coverage", "quote", "confirm", "transfer", "block", "unlock", "verify", "split",
    "estimate", "receipt", "pause", "resume", "refill", "rules", "summary", "penalty", "setup",
    "access", "location", "deadline", "eligibility", "approval", "comparison",
];

/// Text templates; `{a}` and `{b}` are the intent's name words.
const TEMPLATES: &[&str] = &[
    "{a} {b}",
    "{a} {b}",
    "{b}",
    "my {a} {b}",
    "{a} {b} please",
    "what is the {a} {b}",
    "check {a} {b}",
    "i need my {a} {b}",
    "help with {a} {b}",
    "can you tell me the {a} {b}",
    "how do i get the {a} {b} for my account",
    "i would like to know about the {a} {b} today",
    "please show me everything about my current {a} {b} right now",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub n_intents: usize,
    pub per_intent_count: usize,
    pub dim: usize,
    /// Scale of the within-intent noise; roughly the tangent of the typical
    /// angle between a request and its intent centroid.
    pub intent_spread: f64,
    pub seed: u64,
    /// Upper bound on the cosine between any two intent centroids.
    pub max_centroid_cosine: f64,
    /// Intents per family; 1 disables families.
    pub family_size: usize,
    /// Expected cosine between centroids of sibling intents.
    pub family_affinity: f64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_intents: 40,
            per_intent_count: 200,
            dim: 64,
            intent_spread: 0.5,
            seed: 0,
            max_centroid_cosine: 0.5,
            family_size: 1,
            family_affinity: 0.0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_intents < 2 {
            return bad("n_intents must be at least 2");
        }
        if self.per_intent_count < 1 {
            return bad("per_intent_count must be at least 1");
        }
        if self.dim < 1 {
            return bad("dim must be positive");
        }
        if !(self.intent_spread > 0.0 && self.intent_spread <= 1.0) {
            return bad("intent_spread must lie in (0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.max_centroid_cosine) {
            return bad("max_centroid_cosine must lie in [-1, 1]");
        }
        if self.family_size < 1 || self.family_size > 40 {
            return bad("family_size must lie in [1, 40]");
        }
        if !(0.0..1.0).contains(&self.family_affinity) {
            return bad("family_affinity must lie in [0, 1)");
        }
        Ok(())
    }
}

/// A synthetic intent: label, name words and centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIntent {
    pub label: String,
    pub words: (String, String),
    pub centroid: EmbeddingVector,
}

fn gaussian_unit(rng: &mut DetRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn unit_mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn intent_names(spec: &SyntheticCorpusSpec, rng: &mut DetRng) -> Vec<(String, String)> {
    let n_families = spec.n_intents.div_ceil(spec.family_size);
    let mut families: Vec<&str> = FAMILY_WORDS.to_vec();
    families.shuffle(rng);
    let mut names = Vec::with_capacity(spec.n_intents);
    let mut used = std::collections::HashSet::new();
    for k in 0..spec.n_intents {
        let fam = k / spec.family_size;
        // Past the word list, family words repeat with a numeric suffix.
        let a = if n_families <= families.len() || fam < families.len() {
            families[fam % families.len()].to_string()
        } else {
            format!("{}{}", families[fam % families.len()], fam / families.len())
        };
        let mut b;
        loop {
            b = INTENT_WORDS[rng.random_range(0..INTENT_WORDS.len())].to_string();
            if b != a && used.insert(format!("{a}_{b}")) {
                break;
            }
        }
        names.push((a, b));
    }
    names
}

/// Draws the intent centroids and names for a spec.
pub fn synthetic_intents(spec: &SyntheticCorpusSpec) -> Result<Vec<SyntheticIntent>> {
    spec.validate()?;
    let mut rng = rng_from(spec.seed, &[stream::CENTROIDS]);
    let names = intent_names(spec, &mut rng);
    let shared = spec.family_affinity.sqrt();
    let own = (1.0 - spec.family_affinity).sqrt();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(spec.n_intents);
    let mut family_center = Vec::new();
    for k in 0..spec.n_intents {
        if k % spec.family_size == 0 {
            family_center = gaussian_unit(&mut rng, spec.dim);
        }
        let mut attempts = 0;
        let c = loop {
            let cand = if spec.family_size > 1 {
                unit_mix(&family_center, shared, &gaussian_unit(&mut rng, spec.dim), own)
            } else {
                gaussian_unit(&mut rng, spec.dim)
            };
            let ok = centroids.iter().all(|c| {
                super::dot(c, &cand) <= spec.max_centroid_cosine
            });
            if ok {
                break cand;
            }
            attempts += 1;
            if attempts >= MAX_CENTROID_ATTEMPTS {
                return Err(Error::InvalidConfig(format!(
                    "could not place {} centroids in dimension {} with pairwise cosine <= {}",
                    spec.n_intents, spec.dim, spec.max_centroid_cosine
                )));
            }
        };
        centroids.push(c);
    }
    Ok(names
        .into_iter()
        .zip(centroids)
        .map(|((a, b), c)| SyntheticIntent {
            label: format!("{a}_{b}"),
            words: (a, b),
            centroid: EmbeddingVector::from_raw(c).expect("finite centroid"),
        })
        .collect())
}

/// Generates `n_intents * per_intent_count` requests, intent-major.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<EmbeddedRequest>> {
    let intents = synthetic_intents(spec)?;
    let mut sample_rng = rng_from(spec.seed, &[stream::SAMPLES]);
    let mut text_rng = rng_from(spec.seed, &[stream::TEXT]);
    let noise_scale = spec.intent_spread / (spec.dim as f64).sqrt();
    let mut out = Vec::with_capacity(spec.n_intents * spec.per_intent_count);
    for (k, intent) in intents.iter().enumerate() {
        for j in 0..spec.per_intent_count {
            let raw: Vec<f64> = intent
                .centroid
                .as_slice()
                .iter()
                .map(|c| c + noise_scale * sample_rng.sample::<f64, _>(StandardNormal))
                .collect();
            let embedding = EmbeddingVector::normalized(raw)?;
            let template = TEMPLATES[text_rng.random_range(0..TEMPLATES.len())];
            let text = template
                .replace("{a}", &intent.words.0)
                .replace("{b}", &intent.words.1);
            out.push(EmbeddedRequest::new(
                format!("syn-{k:03}-{j:05}"),
                text,
                Some(intent.label.clone()),
                embedding,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    fn small() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            n_intents: 2,
            per_intent_count: 3,
            dim: 8,
            intent_spread: 0.01,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic_corpus(&small()).unwrap();
        let b = generate_synthetic_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let bytes = |c: &[EmbeddedRequest]| -> Vec<u64> {
            c.iter()
                .flat_map(|r| r.embedding.as_slice().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bytes(&a), bytes(&b));
        let other = generate_synthetic_corpus(&SyntheticCorpusSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn within_intent_closer_than_across() {
        let spec = SyntheticCorpusSpec {
            per_intent_count: 20,
            ..small()
        };
        let c = generate_synthetic_corpus(&spec).unwrap();
        let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
        for i in 0..c.len() {
            for j in (i + 1)..c.len() {
                let s = cosine(c[i].embedding.as_slice(), c[j].embedding.as_slice()).unwrap();
                if c[i].intent == c[j].intent {
                    within += s;
                    nw += 1;
                } else {
                    across += s;
                    na += 1;
                }
            }
        }
        assert!(within / nw as f64 > across / na as f64);
    }

    #[test]
    fn full_scale_count() {
        let spec = SyntheticCorpusSpec {
            n_intents: 150,
            per_intent_count: 150,
            dim: 16,
            intent_spread: 0.5,
            max_centroid_cosine: 0.95,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(c.len(), 22_500);
        let labels: std::collections::HashSet<_> = c.iter().map(|r| r.intent.clone()).collect();
        assert_eq!(labels.len(), 150);
    }

    #[test]
    fn centroids_respect_separation_bound() {
        let spec = SyntheticCorpusSpec {
            n_intents: 20,
            dim: 32,
            max_centroid_cosine: 0.3,
            ..small()
        };
        let intents = synthetic_intents(&spec).unwrap();
        for i in 0..intents.len() {
            assert!(intents[i].centroid.is_unit(1e-9));
            for j in (i + 1)..intents.len() {
                let c = cosine(intents[i].centroid.as_slice(), intents[j].centroid.as_slice()).unwrap();
                assert!(c <= 0.3);
            }
        }
    }

    #[test]
    fn impossible_separation_is_reported() {
        let spec = SyntheticCorpusSpec {
            n_intents: 10,
            dim: 2,
            max_centroid_cosine: -0.9,
            ..small()
        };
        assert!(matches!(synthetic_intents(&spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn texts_carry_intent_words() {
        let c = generate_synthetic_corpus(&small()).unwrap();
        for r in &c {
            let label = r.intent.as_deref().unwrap();
            let b = label.split('_').nth(1).unwrap();
            assert!(r.text.contains(b), "{} / {}", r.text, label);
            assert!(r.embedding.is_unit(1e-9));
            assert!(r.token_length >= 1);
        }
    }

    #[test]
    fn preconditions_enforced() {
        assert!(generate_synthetic_corpus(&SyntheticCorpusSpec { n_intents: 1, ..small() }).is_err());
        assert!(generate_synthetic_corpus(&SyntheticCorpusSpec { per_intent_count: 0, ..small() }).is_err());
    }
}
