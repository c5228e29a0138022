//! Text embeddings, similarity metrics and the exact-search vector store.

mod provider;
mod store;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use provider::{embed_texts, Embedder, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig, HASHING_DIM};
pub use store::{EmbeddingRecord, Hit, Metric, PersistentStore, StoreFiles, VectorStore};

/// A finite, non-empty embedding tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct EmbeddingVector {
    values: Vec<f32>,
    model_id: String,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    values: Vec<f32>,
    dim: usize,
    model_id: String,
}

impl TryFrom<RawVector> for EmbeddingVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        if raw.values.len() != raw.dim {
            return Err(Error::DimMismatch { expected: raw.dim, actual: raw.values.len() });
        }
        EmbeddingVector::new(raw.values, raw.model_id)
    }
}

impl From<EmbeddingVector> for RawVector {
    fn from(v: EmbeddingVector) -> Self {
        RawVector { dim: v.values.len(), values: v.values, model_id: v.model_id }
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, model_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding has no components".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("embedding component {i} is not finite")));
        }
        Ok(Self { values, model_id: model_id.into() })
    }

    pub fn from_f64(values: &[f64], model_id: impl Into<String>) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect(), model_id)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt()
    }

    /// Unit-length copy in f64. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.values.iter().map(|&v| f64::from(v) / norm).collect())
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Unit-length copy of `values`. Fails on the zero vector.
pub fn normalize_f64(values: &[f64]) -> Result<Vec<f64>> {
    let norm = values.iter().map(|v| v.powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Euclidean distance.
pub fn l2(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(l2_raw(&a.values, &b.values))
}

pub(crate) fn l2_raw(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum::<f64>().sqrt()
}
