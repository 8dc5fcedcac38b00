//! Outlier clustering, cluster naming and drift-intent coverage.
//!
//! Clustering is greedy average-linkage agglomeration over cosine similarity:
//! the closest pair of groups is merged while its mean pairwise similarity is
//! at least `link_threshold`, and groups smaller than `min_cluster_size` are
//! reported as unclustered. Inputs are sorted by id first, so the result does
//! not depend on input order.

mod naming;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, EmbeddedRequest, EmbeddingVector};
use crate::error::{Error, Result};

pub use naming::name_cluster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub link_threshold: f64,
    pub min_cluster_size: usize,
    pub max_clusters: Option<usize>,
    pub name_ngram_max: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            link_threshold: 0.6,
            min_cluster_size: 5,
            max_clusters: None,
            name_ngram_max: 2,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.link_threshold) {
            return Err(Error::InvalidConfig(format!(
                "link_threshold must be in [0, 1], got {}",
                self.link_threshold
            )));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidConfig("min_cluster_size must be ≥ 2".into()));
        }
        if self.max_clusters == Some(0) {
            return Err(Error::InvalidConfig("max_clusters must be ≥ 1 when set".into()));
        }
        if self.name_ngram_max == 0 {
            return Err(Error::InvalidConfig("name_ngram_max must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Member ids in ascending order.
    pub members: Vec<String>,
    /// Normalised mean of the member embeddings.
    pub centroid: EmbeddingVector,
    pub name: String,
    /// Most frequent member intent and its share of the members.
    pub majority_intent: Option<(String, f64)>,
    /// Smallest cosine between a member and the centroid.
    pub min_member_cosine: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationReport {
    pub clusters: Vec<Cluster>,
    pub unclustered_count: usize,
    pub recall: Option<f64>,
}

/// The persisted report shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationSummary {
    pub clusters: Vec<ClusterSummary>,
    pub unclustered: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub name: String,
    pub size: usize,
    pub majority_intent: Option<String>,
    pub member_ids: Vec<String>,
}

impl InterpretationReport {
    pub fn total(&self) -> usize {
        self.clustered_count() + self.unclustered_count
    }

    pub fn clustered_count(&self) -> usize {
        self.clusters.iter().map(Cluster::size).sum()
    }

    pub fn summary(&self) -> InterpretationSummary {
        InterpretationSummary {
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterSummary {
                    name: c.name.clone(),
                    size: c.size(),
                    majority_intent: c.majority_intent.as_ref().map(|(l, _)| l.clone()),
                    member_ids: c.members.clone(),
                })
                .collect(),
            unclustered: self.unclustered_count,
            recall: self.recall,
        }
    }
}

/// Average-linkage groups as index lists into `items`, before the size floor.
fn agglomerate(items: &[&EmbeddedRequest], threshold: f64) -> Vec<Vec<usize>> {
    let n = items.len();
    // Pairwise similarity of singletons; later rows hold group-average
    // similarities, kept current by the Lance-Williams update.
    let mut sim: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = items[i].embedding.as_slice();
            (0..n)
                .map(|j| cosine_unchecked(a, items[j].embedding.as_slice()))
                .collect()
        })
        .collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active: Vec<bool> = vec![true; n];

    // Best partner per active row, ties to the lower index.
    let best_of = |sim: &Vec<Vec<f64>>, active: &Vec<bool>, i: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j != i && active[j] && best.is_none_or(|(_, s)| sim[i][j] > s) {
                best = Some((j, sim[i][j]));
            }
        }
        best
    };
    let mut best: Vec<Option<(usize, f64)>> = (0..n).map(|i| best_of(&sim, &active, i)).collect();

    loop {
        // Highest-similarity pair; ties go to the lexicographically smallest
        // (i, j) with i < j.
        let mut pick: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((j, s)) = best[i] {
                let (a, b) = (i.min(j), i.max(j));
                let better = match pick {
                    None => true,
                    Some((pa, pb, ps)) => s > ps || (s == ps && (a, b) < (pa, pb)),
                };
                if better {
                    pick = Some((a, b, s));
                }
            }
        }
        let Some((a, b, s)) = pick else { break };
        if s < threshold {
            break;
        }
        let (na, nb) = (members[a].len() as f64, members[b].len() as f64);
        for k in 0..n {
            if active[k] && k != a && k != b {
                let v = (na * sim[a][k] + nb * sim[b][k]) / (na + nb);
                sim[a][k] = v;
                sim[k][a] = v;
            }
        }
        active[b] = false;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        best[b] = None;
        for k in 0..n {
            if !active[k] {
                continue;
            }
            let stale = k == a || matches!(best[k], Some((j, _)) if j == a || j == b);
            if stale {
                best[k] = best_of(&sim, &active, k);
            } else if let Some((j, s)) = best[k] {
                let v = sim[k][a];
                if v > s || (v == s && a < j) {
                    best[k] = Some((a, v));
                }
            }
        }
    }
    (0..n)
        .filter(|&i| active[i])
        .map(|i| {
            let mut m = std::mem::take(&mut members[i]);
            m.sort_unstable();
            m
        })
        .collect()
}

fn majority(items: &[&EmbeddedRequest]) -> Option<(String, f64)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in items {
        if let Some(l) = r.intent.as_deref() {
            *counts.entry(l).or_default() += 1;
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, c)| (l.to_string(), c as f64 / items.len() as f64))
}

fn build_cluster(items: &[&EmbeddedRequest], config: &ClusteringConfig) -> Result<Cluster> {
    let dim = items[0].embedding.dim();
    let mut sum = vec![0.0; dim];
    for r in items {
        for (acc, v) in sum.iter_mut().zip(r.embedding.as_slice()) {
            *acc += v;
        }
    }
    let centroid = EmbeddingVector::normalized(sum).or_else(|_| items[0].embedding.normalize())?;
    let min_member_cosine = items
        .iter()
        .map(|r| cosine_unchecked(r.embedding.as_slice(), centroid.as_slice()))
        .fold(f64::INFINITY, f64::min);
    let texts: Vec<&str> = items.iter().map(|r| r.text.as_str()).collect();
    let mut members: Vec<String> = items.iter().map(|r| r.id.clone()).collect();
    members.sort();
    Ok(Cluster {
        members,
        centroid,
        name: name_cluster(&texts, config.name_ngram_max)?,
        majority_intent: majority(items),
        min_member_cosine,
    })
}

/// Partitions `outliers` into dense clusters plus an unclustered remainder.
pub fn cluster_outliers(outliers: &[EmbeddedRequest], config: &ClusteringConfig) -> Result<InterpretationReport> {
    config.validate()?;
    if outliers.is_empty() {
        return Err(Error::EmptyInput("outliers"));
    }
    let dim = outliers[0].embedding.dim();
    let mut sorted: Vec<&EmbeddedRequest> = outliers.iter().collect();
    for (index, r) in sorted.iter().enumerate() {
        if r.embedding.dim() != dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: dim,
                found: r.embedding.dim(),
            });
        }
    }
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).position(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId {
            id: sorted[w].id.clone(),
            index: w + 1,
        });
    }

    let groups = agglomerate(&sorted, config.link_threshold);
    let mut clusters = Vec::new();
    for g in groups.into_iter().filter(|g| g.len() >= config.min_cluster_size) {
        let items: Vec<&EmbeddedRequest> = g.iter().map(|&i| sorted[i]).collect();
        clusters.push(build_cluster(&items, config)?);
    }
    clusters.sort_by(|a, b| {
        b.size()
            .cmp(&a.size())
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.members.cmp(&b.members))
    });
    if let Some(cap) = config.max_clusters {
        clusters.truncate(cap);
    }
    let clustered: usize = clusters.iter().map(Cluster::size).sum();
    Ok(InterpretationReport {
        clusters,
        unclustered_count: outliers.len() - clustered,
        recall: None,
    })
}

/// Share of `drift_intents` that are the majority label of at least one
/// cluster.
pub fn coverage_recall(report: &InterpretationReport, drift_intents: &BTreeSet<String>) -> Result<f64> {
    if drift_intents.is_empty() {
        return Err(Error::EmptyInput("drift intents"));
    }
    let found: BTreeSet<&str> = report
        .clusters
        .iter()
        .filter_map(|c| c.majority_intent.as_ref().map(|(l, _)| l.as_str()))
        .filter(|l| drift_intents.contains(*l))
        .collect();
    Ok(found.len() as f64 / drift_intents.len() as f64)
}

/// Clusters `outliers` and, when ground truth is given, fills in the recall.
pub fn interpret(
    outliers: &[EmbeddedRequest],
    config: &ClusteringConfig,
    drift_intents: Option<&BTreeSet<String>>,
) -> Result<InterpretationReport> {
    let mut report = cluster_outliers(outliers, config)?;
    if let Some(d) = drift_intents {
        report.recall = Some(coverage_recall(&report, d)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn unit(rng: &mut DetRng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn req(id: String, text: &str, intent: Option<&str>, v: Vec<f64>) -> EmbeddedRequest {
        EmbeddedRequest::new(id, text, intent.map(String::from), EmbeddingVector::normalized(v).unwrap())
    }

    /// `k` tight blobs of `size` vectors plus `noise` uniform singletons.
    fn blobs(seed: u64, d: usize, k: usize, size: usize, spread: f64, noise: usize) -> Vec<EmbeddedRequest> {
        let mut rng = DetRng::seed_from_u64(seed);
        let mut out = Vec::new();
        for b in 0..k {
            let c = unit(&mut rng, d);
            for j in 0..size {
                let v = c
                    .iter()
                    .map(|x| x + spread / (d as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                out.push(req(format!("b{b}-{j:03}"), &format!("topic{b} word"), Some(&format!("intent{b}")), v));
            }
        }
        for j in 0..noise {
            out.push(req(format!("n{j:03}"), "noise", None, unit(&mut rng, d)));
        }
        out
    }

    fn canonical(r: &InterpretationReport) -> BTreeSet<Vec<String>> {
        r.clusters.iter().map(|c| c.members.clone()).collect()
    }

    #[test]
    fn two_blobs_and_noise() {
        let data = blobs(7, 64, 2, 20, 0.3, 10);
        let r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        assert_eq!(r.clusters.len(), 2);
        assert!(r.clusters.iter().all(|c| c.size() == 20));
        assert_eq!(r.unclustered_count, 10);
        for c in &r.clusters {
            assert!(c.min_member_cosine >= 0.6);
            assert_eq!(c.majority_intent.as_ref().unwrap().1, 1.0);
        }
    }

    #[test]
    fn below_size_floor() {
        let data: Vec<_> = (0..3)
            .map(|i| req(format!("r{i}"), "x", None, vec![1.0, 1e-3 * i as f64]))
            .collect();
        let r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        assert!(r.clusters.is_empty());
        assert_eq!(r.unclustered_count, 3);
    }

    #[test]
    fn identical_vectors_one_cluster() {
        let data: Vec<_> = (0..50)
            .map(|i| req(format!("r{i:02}"), "what is the exchange rate", Some("fx"), vec![0.3, 0.4, 0.5]))
            .collect();
        let r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].size(), 50);
        assert_eq!(r.clusters[0].name, "exchange rate");
    }

    #[test]
    fn recall_examples() {
        let data = blobs(8, 32, 5, 10, 0.2, 0);
        let r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        let drift: BTreeSet<String> = (0..7).map(|i| format!("intent{i}")).collect();
        let recall = coverage_recall(&r, &drift).unwrap();
        assert!((recall - 5.0 / 7.0).abs() < 1e-12);
        let none = InterpretationReport {
            clusters: vec![],
            unclustered_count: 3,
            recall: None,
        };
        assert_eq!(coverage_recall(&none, &drift).unwrap(), 0.0);
        assert!(coverage_recall(&none, &BTreeSet::new()).is_err());
    }

    #[test]
    fn ordering_and_cap() {
        let mut data = blobs(9, 32, 1, 12, 0.2, 0);
        data.extend(
            blobs(10, 32, 1, 6, 0.2, 0)
                .into_iter()
                .map(|mut r| {
                    r.id = format!("z{}", r.id);
                    r
                }),
        );
        let r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        assert_eq!(r.clusters.iter().map(Cluster::size).collect::<Vec<_>>(), vec![12, 6]);
        let capped = cluster_outliers(
            &data,
            &ClusteringConfig {
                max_clusters: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(capped.clusters.len(), 1);
        assert_eq!(capped.unclustered_count, 6);
    }

    #[test]
    fn errors() {
        assert!(cluster_outliers(&[], &ClusteringConfig::default()).is_err());
        let dup = vec![req("a".into(), "x", None, vec![1.0]), req("a".into(), "y", None, vec![1.0])];
        assert!(matches!(
            cluster_outliers(&dup, &ClusteringConfig::default()),
            Err(Error::DuplicateId { .. })
        ));
        let bad = ClusteringConfig {
            min_cluster_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summary_json_shape() {
        let data = blobs(11, 16, 1, 6, 0.1, 1);
        let mut r = cluster_outliers(&data, &ClusteringConfig::default()).unwrap();
        r.recall = Some(1.0);
        let v = serde_json::to_value(r.summary()).unwrap();
        let c = &v["clusters"][0];
        assert!(c["name"].is_string() && c["size"] == 6 && c["majority_intent"] == "intent0");
        assert_eq!(c["member_ids"].as_array().unwrap().len(), 6);
        assert_eq!(v["unclustered"], 1);
        assert_eq!(v["recall"], 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn partition_and_permutation(seed in any::<u64>(), k in 1usize..4, spread in 0.1f64..1.5, noise in 0usize..15, rot in 0usize..50) {
            let data = blobs(seed, 16, k, 8, spread, noise);
            let cfg = ClusteringConfig::default();
            let r = cluster_outliers(&data, &cfg).unwrap();
            prop_assert_eq!(r.total(), data.len());
            let mut seen = BTreeSet::new();
            for c in &r.clusters {
                prop_assert!(c.size() >= cfg.min_cluster_size);
                for m in &c.members {
                    prop_assert!(seen.insert(m.clone()));
                }
            }
            let mut shuffled = data.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            let p = cluster_outliers(&shuffled, &cfg).unwrap();
            prop_assert_eq!(canonical(&r), canonical(&p));
        }

        #[test]
        fn threshold_monotone(seed in any::<u64>(), spread in 0.2f64..1.5, lo in 0.0f64..1.0, delta in 0.0f64..0.5) {
            let data = blobs(seed, 16, 3, 8, spread, 6);
            let hi = (lo + delta).min(1.0);
            let at = |t: f64| cluster_outliers(&data, &ClusteringConfig { link_threshold: t, ..Default::default() })
                .unwrap()
                .clustered_count();
            prop_assert!(at(hi) <= at(lo));
        }
    }
}
