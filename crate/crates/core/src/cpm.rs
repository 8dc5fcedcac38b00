//! Sequential change-point detection over a similarity series.
//!
//! At every step `t` the detector looks at the whole history `s_1..s_t`,
//! finds the split `k` whose two segments differ most under a standardized
//! two-sample statistic, and asks how extreme that maximum is under
//! exchangeability by re-evaluating it on Monte-Carlo permutations of the
//! history. The raw permutation p-value is then adjusted for the number of
//! looks the detector takes within its horizon, so the chance of any false
//! alarm over a no-change run of that length stays at or below `alpha`.
//! The default Šidák adjustment is conservative because looks overlap; the
//! simulated adjustment maps the raw p-value through the null distribution
//! of the smallest raw p-value over all looks and holds the rate at `alpha`.
//! The detector fires once and then freezes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    MannWhitney,
    StudentT,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::MannWhitney => "mann_whitney",
            Statistic::StudentT => "student_t",
        }
    }
}

/// How the per-step p-value is corrected for repeated looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    /// Raw per-step p-value.
    None,
    /// `1 − (1 − p)^looks`; ignores the correlation between looks.
    #[default]
    Sidak,
    /// Fraction of simulated no-change runs whose smallest raw p-value over
    /// the horizon is at most `p`.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpmConfig {
    pub alpha: f64,
    pub statistic: Statistic,
    pub min_history: usize,
    pub mc_replicates: usize,
    pub seed: u64,
    /// Stream length over which the false-alarm rate is held at `alpha`.
    /// The per-step p-value is adjusted for `horizon - min_history + 1`
    /// looks; `horizon <= min_history` disables the adjustment.
    pub horizon: usize,
    pub adjustment: Adjustment,
}

impl Default for CpmConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            statistic: Statistic::MannWhitney,
            min_history: 8,
            mc_replicates: 2000,
            seed: 0,
            horizon: 30,
            adjustment: Adjustment::Sidak,
        }
    }
}

impl CpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        if self.min_history < 4 {
            return Err(Error::InvalidConfig("min_history must be at least 4".into()));
        }
        if self.mc_replicates == 0 {
            return Err(Error::InvalidConfig("mc_replicates must be positive".into()));
        }
        Ok(())
    }

    /// Number of tests the adjustment accounts for.
    pub fn looks(&self) -> usize {
        self.horizon.saturating_sub(self.min_history) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub detected: bool,
    /// Step at which the detector fired.
    pub t_d: Option<usize>,
    /// Estimated first index of the changed regime.
    pub t_p: Option<usize>,
    /// Adjusted p-value of every tested step; entry `i` belongs to
    /// `t = min_history + i`.
    #[serde(rename = "p_values")]
    pub p_value_trail: Vec<f64>,
    #[serde(skip)]
    pub statistic: Statistic,
}

impl ChangePointReport {
    fn empty(statistic: Statistic) -> Self {
        Self {
            detected: false,
            t_d: None,
            t_p: None,
            p_value_trail: Vec::new(),
            statistic,
        }
    }

    pub fn statistic_name(&self) -> &'static str {
        self.statistic.name()
    }
}

/// Midranks (1-based) and the tie term `Σ(τ³ − τ)`.
fn midranks(xs: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let tau = (j - i + 1) as f64;
        ties += tau * tau * tau - tau;
        i = j + 1;
    }
    (ranks, ties)
}

/// Max over splits of |standardized rank-sum| given (possibly permuted) ranks.
fn max_rank_split(ranks: &[f64], ties: f64) -> (f64, usize) {
    let t = ranks.len() as f64;
    let tie_adj = (t + 1.0) - ties / (t * (t - 1.0));
    let mut best = (f64::NEG_INFINITY, 0);
    let mut w = 0.0;
    for (i, r) in ranks[..ranks.len() - 2].iter().enumerate() {
        w += r;
        let k = i + 1;
        if k < 2 {
            continue;
        }
        let n1 = k as f64;
        let n2 = t - n1;
        let var = n1 * n2 / 12.0 * tie_adj;
        let z = if var > 0.0 {
            (w - n1 * (t + 1.0) / 2.0).abs() / var.sqrt()
        } else {
            0.0
        };
        if z > best.0 {
            best = (z, k);
        }
    }
    best
}

/// Max over splits of |pooled two-sample t| on centered values.
fn max_t_split(xs: &[f64]) -> (f64, usize) {
    let n = xs.len();
    let (mut s, mut ss) = (0.0, 0.0);
    for x in xs {
        s += x;
        ss += x * x;
    }
    let mut best = (f64::NEG_INFINITY, 0);
    let (mut s1, mut ss1) = (0.0, 0.0);
    for (i, x) in xs[..n - 2].iter().enumerate() {
        s1 += x;
        ss1 += x * x;
        let k = i + 1;
        if k < 2 {
            continue;
        }
        let (n1, n2) = (k as f64, (n - k) as f64);
        let (s2, ss2) = (s - s1, ss - ss1);
        let (m1, m2) = (s1 / n1, s2 / n2);
        let sse = ((ss1 - n1 * m1 * m1) + (ss2 - n2 * m2 * m2)).max(0.0);
        let pooled = sse / (n1 + n2 - 2.0);
        let diff = (m1 - m2).abs();
        let stat = if pooled > 0.0 {
            diff / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt()
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if stat > best.0 {
            best = (stat, k);
        }
    }
    best
}

fn centered(series: &[f64]) -> Option<Vec<f64>> {
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return None;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Some(series.iter().map(|x| x - mean).collect())
}

/// Largest standardized two-sample statistic over splits
/// `{s_1..s_k} | {s_{k+1}..s_t}` for `k` in `[2, t-2]`, with its split `k`
/// (smallest `k` on ties).
pub fn max_split_statistic(series: &[f64], statistic: Statistic) -> Result<(f64, usize)> {
    if series.len() < 4 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            required: 4,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(match statistic {
        Statistic::MannWhitney => {
            let (ranks, ties) = midranks(series);
            max_rank_split(&ranks, ties)
        }
        Statistic::StudentT => match centered(series) {
            Some(c) => max_t_split(&c),
            None => (0.0, 2),
        },
    })
}

/// Raw Monte-Carlo permutation p-value of the observed max statistic.
fn permutation_p_value(series: &[f64], config: &CpmConfig, observed: f64) -> f64 {
    let t = series.len() as u64;
    // Values (ranks for the rank statistic) are permuted; each replicate owns
    // a derived seed so the count does not depend on evaluation order.
    let (values, ties) = match config.statistic {
        Statistic::MannWhitney => midranks(series),
        Statistic::StudentT => match centered(series) {
            Some(c) => (c, 0.0),
            None => return 1.0,
        },
    };
    let threshold = observed - 1e-12 * observed.abs().max(1.0);
    let exceed = (0..config.mc_replicates)
        .into_par_iter()
        .with_min_len(512)
        .filter(|&r| {
            let mut rng = rng_from(config.seed, &[stream::PERMUTATION, t, r as u64]);
            let mut perm = values.clone();
            perm.shuffle(&mut rng);
            let (d, _) = match config.statistic {
                Statistic::MannWhitney => max_rank_split(&perm, ties),
                Statistic::StudentT => max_t_split(&perm),
            };
            d >= threshold
        })
        .count();
    (1 + exceed) as f64 / (1 + config.mc_replicates) as f64
}

/// Šidák adjustment `1 − (1 − p)^m`.
pub fn sidak(p: f64, looks: usize) -> f64 {
    if looks <= 1 {
        return p;
    }
    -((looks as f64) * (-p).ln_1p()).exp_m1()
}

/// Number of simulated no-change runs behind [`Adjustment::Simulated`].
pub const NULL_RUNS: usize = 20_000;

/// Sorted smallest raw p-values over the looks of simulated no-change runs.
///
/// The rank statistic is distribution-free for continuous i.i.d. data, so
/// Gaussian noise stands in for any null; the t statistic is calibrated
/// against Gaussian noise. Tables are cached per shape.
pub fn null_min_p(statistic: Statistic, min_history: usize, horizon: usize) -> Arc<Vec<f64>> {
    type Key = (Statistic, usize, usize);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Vec<f64>>>>> = OnceLock::new();
    let key = (statistic, min_history, horizon);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let table = Arc::new(simulate_null_min_p(statistic, min_history, horizon));
    cache.lock().unwrap().entry(key).or_insert(table).clone()
}

fn simulate_null_min_p(statistic: Statistic, min_history: usize, horizon: usize) -> Vec<f64> {
    let looks = horizon.saturating_sub(min_history) + 1;
    let stats: Vec<Vec<f64>> = (0..NULL_RUNS)
        .into_par_iter()
        .with_min_len(256)
        .map(|run| {
            let mut rng = rng_from(0, &[stream::CALIBRATION, run as u64]);
            let xs: Vec<f64> = (0..horizon.max(min_history))
                .map(|_| rng.sample(StandardNormal))
                .collect();
            (0..looks)
                .map(|i| {
                    let (d, _) = max_split_statistic(&xs[..min_history + i], statistic)
                        .expect("finite series of length >= 4");
                    d
                })
                .collect()
        })
        .collect();
    let mut min_p = vec![1.0f64; NULL_RUNS];
    for look in 0..looks {
        let mut sorted: Vec<f64> = stats.iter().map(|s| s[look]).collect();
        sorted.sort_by(f64::total_cmp);
        for (run, s) in stats.iter().enumerate() {
            let below = sorted.partition_point(|&d| d < s[look]);
            let p = (NULL_RUNS - below) as f64 / NULL_RUNS as f64;
            min_p[run] = min_p[run].min(p);
        }
    }
    min_p.sort_by(f64::total_cmp);
    min_p
}

/// Run-level p-value of a raw per-step p-value against a null table.
pub fn simulated_adjustment(p: f64, table: &[f64]) -> f64 {
    let at_most = table.partition_point(|&m| m <= p);
    (1 + at_most) as f64 / (1 + table.len()) as f64
}

/// Stateful single change-point detector.
#[derive(Debug, Clone)]
pub struct CpmDetector {
    config: CpmConfig,
    series: Vec<f64>,
    report: ChangePointReport,
    null_table: Option<Arc<Vec<f64>>>,
}

impl CpmDetector {
    pub fn new(config: CpmConfig) -> Result<Self> {
        config.validate()?;
        let report = ChangePointReport::empty(config.statistic);
        let null_table = (config.adjustment == Adjustment::Simulated && config.looks() > 1)
            .then(|| null_min_p(config.statistic, config.min_history, config.horizon));
        Ok(Self {
            config,
            series: Vec::new(),
            report,
            null_table,
        })
    }

    pub fn config(&self) -> &CpmConfig {
        &self.config
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    pub fn report(&self) -> &ChangePointReport {
        &self.report
    }

    /// Feeds observation `s_t`; `t` is 1-based and must follow the previous
    /// step.
    pub fn step(&mut self, t: usize, value: f64) -> Result<&ChangePointReport> {
        if let Some(t_d) = self.report.t_d {
            return Err(Error::AlreadyDetected { t_d });
        }
        let expected = self.series.len() + 1;
        if t != expected {
            return Err(Error::OutOfOrder { expected, got: t });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { index: t });
        }
        self.series.push(value);
        if t < self.config.min_history {
            return Ok(&self.report);
        }
        let (d, k) = max_split_statistic(&self.series, self.config.statistic)?;
        let raw = permutation_p_value(&self.series, &self.config, d);
        let p = match (self.config.adjustment, &self.null_table) {
            (Adjustment::Sidak, _) => sidak(raw, self.config.looks()),
            (Adjustment::Simulated, Some(table)) => simulated_adjustment(raw, table),
            _ => raw,
        };
        self.report.p_value_trail.push(p);
        if p < self.config.alpha {
            self.report.detected = true;
            self.report.t_d = Some(t);
            self.report.t_p = Some(k + 1);
        }
        Ok(&self.report)
    }

    /// Feeds the next observation.
    pub fn push(&mut self, value: f64) -> Result<&ChangePointReport> {
        self.step(self.series.len() + 1, value)
    }

    pub fn is_detected(&self) -> bool {
        self.report.detected
    }
}

/// Runs a whole series through a fresh detector, stopping at detection.
pub fn run_series(series: &[f64], config: &CpmConfig) -> Result<ChangePointReport> {
    if series.is_empty() {
        return Err(Error::EmptyInput("series"));
    }
    let mut det = CpmDetector::new(config.clone())?;
    for &s in series {
        if det.push(s)?.detected {
            break;
        }
    }
    Ok(det.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    /// Direct rank-sum for one split: rank every value from scratch by
    /// counting, independent of the prefix-sum path.
    fn brute_force_mw(series: &[f64]) -> (f64, usize) {
        let t = series.len();
        let rank = |x: f64| {
            let less = series.iter().filter(|&&y| y < x).count() as f64;
            let equal = series.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let mut ties = std::collections::HashMap::new();
        for x in series {
            *ties.entry(x.to_bits()).or_insert(0.0) += 1.0;
        }
        let tie_sum: f64 = ties.values().map(|&c: &f64| c * c * c - c).sum();
        let n = t as f64;
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 2..=t - 2 {
            let w: f64 = series[..k].iter().map(|&x| rank(x)).sum();
            let n1 = k as f64;
            let n2 = n - n1;
            let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
            let z = if var > 0.0 { (w - n1 * (n + 1.0) / 2.0).abs() / var.sqrt() } else { 0.0 };
            if z > best.0 {
                best = (z, k);
            }
        }
        best
    }

    #[test]
    fn step_series_splits_at_the_step() {
        let s = [1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0];
        let (d, k) = max_split_statistic(&s, Statistic::MannWhitney).unwrap();
        assert_eq!(k, 4);
        let (bd, bk) = brute_force_mw(&s);
        assert_eq!(bk, 4);
        assert!((d - bd).abs() < 1e-12);
        let (_, kt) = max_split_statistic(&s, Statistic::StudentT).unwrap();
        assert_eq!(kt, 4);
    }

    #[test]
    fn constant_series_has_zero_statistic() {
        let s = [0.83; 12];
        assert_eq!(max_split_statistic(&s, Statistic::StudentT).unwrap().0, 0.0);
        assert_eq!(max_split_statistic(&s, Statistic::MannWhitney).unwrap().0, 0.0);
    }

    #[test]
    fn negated_series_gives_same_rank_statistic() {
        let mut rng = DetRng::seed_from_u64(4);
        let s: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = max_split_statistic(&s, Statistic::MannWhitney).unwrap();
        let b = max_split_statistic(&neg, Statistic::MannWhitney).unwrap();
        assert_eq!(a.1, b.1);
        assert!((a.0 - b.0).abs() < 1e-12);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            max_split_statistic(&[1.0, 2.0, 3.0], Statistic::MannWhitney),
            Err(Error::SeriesTooShort { len: 3, .. })
        ));
    }

    #[test]
    fn prefix_path_matches_brute_force() {
        let mut rng = DetRng::seed_from_u64(5);
        for _ in 0..50 {
            let t = rng.random_range(4..40);
            // Coarse values force ties.
            let s: Vec<f64> = (0..t).map(|_| (rng.random::<f64>() * 6.0).floor()).collect();
            let (d, k) = max_split_statistic(&s, Statistic::MannWhitney).unwrap();
            let (bd, bk) = brute_force_mw(&s);
            assert!((d - bd).abs() < 1e-9, "{s:?}");
            assert_eq!(k, bk, "{s:?}");
        }
    }

    #[test]
    fn mean_shift_detected_near_the_change() {
        let mut rng = DetRng::seed_from_u64(2024);
        let mut s: Vec<f64> = (0..15)
            .map(|_| 0.95 + 0.001 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        s.extend((0..15).map(|_| 0.80 + 0.001 * rng.sample::<f64, _>(StandardNormal)));
        let report = run_series(&s, &CpmConfig::default()).unwrap();
        assert!(report.detected);
        let t_p = report.t_p.unwrap();
        assert!((14..=16).contains(&t_p), "t_p = {t_p}");
        assert!(t_p < report.t_d.unwrap());
    }

    #[test]
    fn constant_series_never_detected() {
        let report = run_series(&[0.9; 30], &CpmConfig::default()).unwrap();
        assert!(!report.detected);
        assert!(report.t_d.is_none() && report.t_p.is_none());
        assert_eq!(report.p_value_trail.len(), 23);
        assert!(report.p_value_trail.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn step_contract_errors() {
        let mut det = CpmDetector::new(CpmConfig::default()).unwrap();
        det.step(1, 0.5).unwrap();
        assert!(matches!(det.step(3, 0.5), Err(Error::OutOfOrder { expected: 2, got: 3 })));
        assert!(matches!(det.step(2, f64::NAN), Err(Error::NonFinite { .. })));

        let mut det = CpmDetector::new(CpmConfig::default()).unwrap();
        for t in 1..=10 {
            det.step(t, 1.0).unwrap();
        }
        for t in 11..=20 {
            if det.step(t, 0.0).unwrap().detected {
                break;
            }
        }
        assert!(det.is_detected());
        let t = det.series().len() + 1;
        assert!(matches!(det.step(t, 0.0), Err(Error::AlreadyDetected { .. })));
        assert!(matches!(run_series(&[], &CpmConfig::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn config_validation() {
        assert!(CpmConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(CpmConfig { min_history: 3, ..Default::default() }.validate().is_err());
        assert_eq!(CpmConfig::default().looks(), 23);
    }

    #[test]
    fn sidak_adjustment() {
        assert_eq!(sidak(0.01, 1), 0.01);
        assert!((sidak(0.01, 2) - (1.0 - 0.99f64 * 0.99)).abs() < 1e-15);
        assert!(sidak(0.5, 23) < 1.0);
    }

    #[test]
    fn simulated_null_table_is_sorted_and_tighter_than_sidak() {
        let table = null_min_p(Statistic::MannWhitney, 8, 30);
        assert_eq!(table.len(), NULL_RUNS);
        assert!(table.windows(2).all(|w| w[0] <= w[1]));
        assert!(table.iter().all(|&p| p > 0.0 && p <= 1.0));
        // Looks are positively correlated, so the α-quantile of the minimum
        // lies above the Šidák per-look level.
        let q = table[NULL_RUNS / 20];
        let sidak_level = 1.0 - 0.95f64.powf(1.0 / 23.0);
        assert!(q > sidak_level, "{q} vs {sidak_level}");
        assert!(Arc::ptr_eq(&table, &null_min_p(Statistic::MannWhitney, 8, 30)));
    }

    #[test]
    fn simulated_adjustment_is_monotone_run_level_p() {
        let table = null_min_p(Statistic::MannWhitney, 8, 30);
        assert_eq!(simulated_adjustment(1.0, &table), 1.0);
        assert!(simulated_adjustment(0.0, &table) < 1e-4);
        let q = table[NULL_RUNS / 20];
        assert!((simulated_adjustment(q, &table) - 0.05).abs() < 0.002);
        let mut prev = 0.0;
        for i in 0..=100 {
            let a = simulated_adjustment(i as f64 / 100.0, &table);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn clean_step_fires_on_fourth_post_change_point() {
        let mut s: Vec<f64> = (0..15).map(|i| 0.9 + 0.001 * ((i * 7) % 15) as f64).collect();
        let simulated = CpmConfig { adjustment: Adjustment::Simulated, ..Default::default() };
        for post in 1..=4 {
            s.push(0.5 + 0.001 * post as f64);
            let r = run_series(&s, &simulated).unwrap();
            assert_eq!(r.detected, post == 4, "after {post} post-change points");
        }
        assert!(!run_series(&s, &CpmConfig::default()).unwrap().detected);
    }

    #[test]
    fn report_json_shape() {
        let r = ChangePointReport {
            detected: true,
            t_d: Some(18),
            t_p: Some(15),
            p_value_trail: vec![0.5, 0.01],
            statistic: Statistic::MannWhitney,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 4);
        assert_eq!(v["t_p"], 15);
        assert_eq!(v["p_values"][1], 0.01);
    }

    fn quick() -> CpmConfig {
        CpmConfig {
            mc_replicates: 200,
            ..CpmConfig::default()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn run_series_equals_stepwise_fold(seed in any::<u64>(), len in 1usize..30, shift in 0.0f64..0.3) {
            let mut rng = DetRng::seed_from_u64(seed);
            let s: Vec<f64> = (0..len)
                .map(|i| rng.random::<f64>() * 0.05 - if i > len / 2 { shift } else { 0.0 })
                .collect();
            let cfg = quick();
            let batch = run_series(&s, &cfg).unwrap();
            let mut det = CpmDetector::new(cfg).unwrap();
            for &x in &s {
                if det.push(x).unwrap().detected {
                    break;
                }
            }
            prop_assert_eq!(&batch, det.report());
        }

        #[test]
        fn rank_report_invariant_under_monotone_transform(seed in any::<u64>(), shift in 0.0f64..0.2) {
            let mut rng = DetRng::seed_from_u64(seed);
            let s: Vec<f64> = (0..24)
                .map(|i| rng.random::<f64>() * 0.1 + if i >= 12 { shift } else { 0.0 })
                .collect();
            let transformed: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            let a = run_series(&s, &quick()).unwrap();
            let b = run_series(&transformed, &quick()).unwrap();
            prop_assert_eq!(a.detected, b.detected);
            prop_assert_eq!(a.t_d, b.t_d);
            prop_assert_eq!(a.t_p, b.t_p);
        }

        #[test]
        fn p_values_in_unit_interval_and_deterministic(seed in any::<u64>()) {
            let mut rng = DetRng::seed_from_u64(seed);
            let s: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
            let a = run_series(&s, &quick()).unwrap();
            let b = run_series(&s, &quick()).unwrap();
            prop_assert_eq!(&a, &b);
            for p in &a.p_value_trail {
                prop_assert!(*p > 0.0 && *p <= 1.0);
            }
        }
    }

    #[test]
    fn change_point_estimate_converges_on_hard_step() {
        let mut s = vec![0.9; 12];
        s.extend([0.1; 4]);
        let (_, k) = max_split_statistic(&s, Statistic::MannWhitney).unwrap();
        assert_eq!(k, 12);
        let mut rng = DetRng::seed_from_u64(8);
        let mut noisy: Vec<f64> = (0..12).map(|_| 0.9 + 0.01 * rng.random::<f64>()).collect();
        for extra in 1..=10 {
            noisy.push(0.5 + 0.01 * rng.random::<f64>());
            let (_, k) = max_split_statistic(&noisy, Statistic::StudentT).unwrap();
            if extra >= 2 {
                assert_eq!(k, 12, "after {extra} post-change points");
            }
        }
    }
}
