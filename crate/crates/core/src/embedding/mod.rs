//! Dense request representations.
//!
//! Embeddings are never computed here from text: they arrive precomputed from
//! a file ([`io`]) or from the seeded generator in [`synthetic`]. Every vector
//! that enters the pipeline is finite and, once normalized, unit length.

pub mod io;
pub mod synthetic;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use io::{load_embeddings, CorpusRecord};
pub use synthetic::{generate_synthetic_corpus, SyntheticCorpusSpec};

/// Default dimension, matching common sentence encoders.
pub const DEFAULT_DIM: usize = 512;

/// A finite dense vector. Cloning shares the underlying buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Arc<[f64]>,
}

impl EmbeddingVector {
    /// Wraps finite values without normalizing them.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Self {
            values: values.into(),
        })
    }

    /// Wraps and L2-normalizes.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        Self::from_raw(values)?.normalize()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Returns a unit-norm copy. Fails on the zero vector.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm { index: 0 });
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two equal-length vectors.
///
/// Returns exactly `1.0` for identical non-zero inputs and `0.0` when either
/// side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let ab = dot(a, b);
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    // sqrt(x * x) == x exactly, so identical inputs give ab / ab.
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// One user utterance with its representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedRequest {
    pub id: String,
    pub text: String,
    pub intent: Option<String>,
    pub embedding: EmbeddingVector,
    pub token_length: usize,
    /// Id of the row this one was sampled from, for upsampled corpora.
    pub source_id: Option<String>,
}

impl EmbeddedRequest {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        intent: Option<String>,
        embedding: EmbeddingVector,
    ) -> Self {
        let text = text.into();
        let token_length = token_count(&text);
        Self {
            id: id.into(),
            text,
            intent,
            embedding,
            token_length,
            source_id: None,
        }
    }
}

/// Whitespace token count.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}
