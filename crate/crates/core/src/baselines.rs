//! Batch-level dataset-similarity baselines and the classifier-confidence
//! signal.
//!
//! Each baseline produces one number per batch, oriented so that drift pushes
//! it down like the autoencoder similarity: Medoid and confidence are
//! similarities already, FID is negated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, dot, EmbeddedRequest, EmbeddingVector};
use crate::error::{Error, Result};
use crate::stream::{Batch, BatchScorer, SimilaritySeries};

/// Ridge added to every covariance fitted from samples.
pub const COVARIANCE_SHRINKAGE: f64 = 1e-6;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

fn check_same_dim<'a>(sets: &[&'a [EmbeddedRequest]]) -> Result<usize> {
    let mut dim = None;
    for set in sets {
        if set.is_empty() {
            return Err(Error::EmptyInput("embedding set"));
        }
        for (index, r) in set.iter().enumerate() {
            match dim {
                None => dim = Some(r.embedding.dim()),
                Some(d) if d != r.embedding.dim() => {
                    return Err(Error::DimensionMismatch {
                        index,
                        expected: d,
                        found: r.embedding.dim(),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(dim.expect("non-empty"))
}

fn mean_vector(set: &[EmbeddedRequest], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for r in set {
        for (acc, v) in m.iter_mut().zip(r.embedding.as_slice()) {
            *acc += v;
        }
    }
    let n = set.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Cosine between the arithmetic means of two embedding sets.
pub fn medoid_similarity(anchor: &[EmbeddedRequest], batch: &[EmbeddedRequest]) -> Result<f64> {
    let dim = check_same_dim(&[anchor, batch])?;
    Ok(cosine_unchecked(&mean_vector(anchor, dim), &mean_vector(batch, dim)))
}

/// Mean and covariance of a multivariate Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianFit {
    /// Sample mean and unbiased covariance plus the shrinkage ridge.
    pub fn fit(set: &[EmbeddedRequest]) -> Result<Self> {
        let dim = check_same_dim(&[set])?;
        let mean = DVector::from_vec(mean_vector(set, dim));
        let mut cov = DMatrix::zeros(dim, dim);
        for r in set {
            let c = DVector::from_column_slice(r.embedding.as_slice()) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        if set.len() > 1 {
            cov /= (set.len() - 1) as f64;
        }
        for i in 0..dim {
            cov[(i, i)] += COVARIANCE_SHRINKAGE;
        }
        Self::from_moments(mean, cov)
    }

    /// Uses the given moments as-is (no shrinkage).
    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: d,
                found: covariance.nrows(),
            });
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidConfig("covariance is not symmetric".into()));
                }
            }
        }
        Ok(Self {
            mean,
            covariance: symmetrize(covariance),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Eigenvalues clamped at zero, and the PSD square root.
fn psd_eigen(m: DMatrix<f64>, what: &'static str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let eig = nalgebra::SymmetricEigen::try_new(m, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNoConvergence(what))?;
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    Ok((vals, eig.eigenvectors))
}

fn psd_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = psd_eigen(m, "covariance square root")?;
    let sqrt_vals = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    Ok(&vecs * sqrt_vals * vecs.transpose())
}

/// Fréchet (2-Wasserstein) distance between two Gaussians:
/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The trace of `(Σ₁Σ₂)^{1/2}` is taken from the symmetric matrix
/// `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which has the same spectrum.
pub fn fid_between(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff = &a.mean - &b.mean;
    let root_a = psd_sqrt(a.covariance.clone())?;
    let inner = symmetrize(&root_a * &b.covariance * &root_a);
    let (vals, _) = psd_eigen(inner, "covariance product")?;
    let cross: f64 = vals.iter().map(|v| v.sqrt()).sum();
    let d = diff.dot(&diff) + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// FID between Gaussians fitted to two embedding sets.
pub fn fid_distance(anchor: &[EmbeddedRequest], batch: &[EmbeddedRequest]) -> Result<f64> {
    check_same_dim(&[anchor, batch])?;
    fid_between(&GaussianFit::fit(anchor)?, &GaussianFit::fit(batch)?)
}

/// Medoid similarity against a fixed anchor set.
pub struct MedoidScorer {
    anchor_mean: Vec<f64>,
}

impl MedoidScorer {
    pub fn new(anchor: &[EmbeddedRequest]) -> Result<Self> {
        let dim = check_same_dim(&[anchor])?;
        Ok(Self {
            anchor_mean: mean_vector(anchor, dim),
        })
    }
}

impl BatchScorer for MedoidScorer {
    fn score(&self, batch: &[EmbeddedRequest]) -> Result<f64> {
        let dim = check_same_dim(&[batch])?;
        if dim != self.anchor_mean.len() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.anchor_mean.len(),
                found: dim,
            });
        }
        Ok(cosine_unchecked(&self.anchor_mean, &mean_vector(batch, dim)))
    }
}

/// Negated FID against a fixed anchor fit.
pub struct FidScorer {
    anchor: GaussianFit,
}

impl FidScorer {
    pub fn new(anchor: &[EmbeddedRequest]) -> Result<Self> {
        Ok(Self {
            anchor: GaussianFit::fit(anchor)?,
        })
    }
}

impl BatchScorer for FidScorer {
    fn score(&self, batch: &[EmbeddedRequest]) -> Result<f64> {
        Ok(-fid_between(&self.anchor, &GaussianFit::fit(batch)?)?)
    }
}

/// Nearest-centroid classifier with a softmax over cosine scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidClassifier {
    pub labels: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl CentroidClassifier {
    /// One unit-norm centroid per intent label seen in `training`. Requests
    /// without a label are ignored.
    pub fn fit(training: &[EmbeddedRequest], temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        let mut groups: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
        for r in training {
            if let Some(label) = r.intent.as_deref() {
                let acc = groups.entry(label).or_insert_with(|| vec![0.0; r.embedding.dim()]);
                if acc.len() != r.embedding.dim() {
                    return Err(Error::DimensionMismatch {
                        index: 0,
                        expected: acc.len(),
                        found: r.embedding.dim(),
                    });
                }
                for (a, v) in acc.iter_mut().zip(r.embedding.as_slice()) {
                    *a += v;
                }
            }
        }
        if groups.is_empty() {
            return Err(Error::EmptyInput("labelled training requests"));
        }
        let mut labels = Vec::with_capacity(groups.len());
        let mut centroids = Vec::with_capacity(groups.len());
        for (label, sum) in groups {
            labels.push(label.to_string());
            centroids.push(EmbeddingVector::normalized(sum)?.as_slice().to_vec());
        }
        Ok(Self {
            labels,
            centroids,
            temperature,
        })
    }

    /// Softmax posterior over intents.
    pub fn posterior(&self, e: &EmbeddingVector) -> Vec<f64> {
        let logits: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| dot(c, e.as_slice()) / e.norm().max(f64::MIN_POSITIVE) / self.temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|x| x / z).collect()
    }

    /// Max-softmax confidence.
    pub fn confidence(&self, e: &EmbeddingVector) -> f64 {
        self.posterior(e).into_iter().fold(0.0, f64::max)
    }
}

impl BatchScorer for CentroidClassifier {
    fn score(&self, batch: &[EmbeddedRequest]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let dim = self.centroids[0].len();
        for (index, r) in batch.iter().enumerate() {
            if r.embedding.dim() != dim {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: dim,
                    found: r.embedding.dim(),
                });
            }
        }
        Ok(batch.iter().map(|r| self.confidence(&r.embedding)).sum::<f64>() / batch.len() as f64)
    }
}

/// Mean max-softmax confidence per batch.
pub fn confidence_series(classifier: &CentroidClassifier, batches: &[Batch]) -> Result<SimilaritySeries> {
    let mut series = SimilaritySeries::default();
    for b in batches {
        series.push(classifier.score(&b.requests)?)?;
    }
    Ok(series)
}
