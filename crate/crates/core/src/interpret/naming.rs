//! Frequency-scored n-gram cluster names.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercased word tokens; punctuation other than inner apostrophes is a
/// separator.
fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn content_tokens(text: &str) -> Vec<String> {
    let words = stopwords();
    tokens(text).into_iter().filter(|t| !words.contains(t.as_str())).collect()
}

/// Name for a group of texts: the n-gram (`n ≤ ngram_max`) maximising
/// `count × n`, ties broken lexicographically.
///
/// Stopwords are dropped before n-grams are formed. If every text consists of
/// stopwords only, the raw tokens are used instead.
pub fn name_cluster<S: AsRef<str>>(texts: &[S], ngram_max: usize) -> Result<String> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("cluster member texts"));
    }
    if ngram_max == 0 {
        return Err(Error::InvalidConfig("name_ngram_max must be ≥ 1".into()));
    }
    let mut docs: Vec<Vec<String>> = texts.iter().map(|t| content_tokens(t.as_ref())).collect();
    if docs.iter().all(Vec::is_empty) {
        docs = texts.iter().map(|t| tokens(t.as_ref())).collect();
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &docs {
        for n in 1..=ngram_max.min(doc.len()) {
            for gram in doc.windows(n) {
                *counts.entry(gram.join(" ")).or_default() += 1;
            }
        }
    }
    // BTreeMap iterates in lexicographic order, so keeping the first maximum
    // gives the tie-break.
    let mut best: Option<(&str, usize)> = None;
    for (gram, count) in &counts {
        let score = count * (gram.matches(' ').count() + 1);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((gram, score));
        }
    }
    Ok(best.map(|(g, _)| g.to_string()).unwrap_or_default())
}
