use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embedding::{normalize_f64, EmbeddingVector};
use crate::error::{Error, Result};

pub const COVARIANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    /// Unbiased sample covariance plus `COVARIANCE_EPSILON * I`.
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn moments(vectors: &[Vec<f64>]) -> Result<MomentSummary> {
    if vectors.len() < 2 {
        return Err(Error::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch { expected: dim, actual: bad.len() });
    }
    let n = vectors.len();
    let data = DMatrix::from_fn(n, dim, |i, j| vectors[i][j]);
    let mean = DVector::from_fn(dim, |j, _| data.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| data[(i, j)] - mean[j]);
    let mut covariance = centered.transpose() * &centered / (n as f64 - 1.0);
    // Exact symmetry regardless of summation order.
    covariance = (&covariance + covariance.transpose()) * 0.5;
    for j in 0..dim {
        covariance[(j, j)] += COVARIANCE_EPSILON;
    }
    Ok(MomentSummary { mean, covariance, count: n })
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Squared mean distance plus the covariance trace term. Never negative.
pub fn frechet_distance(a: &MomentSummary, b: &MomentSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), actual: b.dim() });
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let sa = psd_sqrt(&a.covariance);
    let inner = &sa * &b.covariance * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Fréchet distance between two embedding sets, optionally on unit-length
/// copies of the vectors.
pub fn fid_datasets(real: &[EmbeddingVector], synthetic: &[EmbeddingVector], normalize: bool) -> Result<f64> {
    let model = real.first().or(synthetic.first()).map(|v| v.model_id().to_string());
    let prep = |set: &[EmbeddingVector]| -> Result<Vec<Vec<f64>>> {
        set.iter()
            .map(|v| {
                if let Some(m) = &model {
                    if v.model_id() != m {
                        return Err(Error::ModelMismatch { expected: m.clone(), actual: v.model_id().to_string() });
                    }
                }
                if normalize { normalize_f64(&v.to_f64()) } else { Ok(v.to_f64()) }
            })
            .collect()
    };
    let (a, b) = (prep(real)?, prep(synthetic)?);
    for (name, set) in [("real", &a), ("synthetic", &b)] {
        if let Some(dim) = set.first().map(Vec::len) {
            if set.len() * 4 < dim {
                log::warn!("{name} set has {} vectors for dimension {dim}; the distance estimate is noisy", set.len());
            }
        }
    }
    frechet_distance(&moments(&a)?, &moments(&b)?)
}
