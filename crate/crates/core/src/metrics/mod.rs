//! Dataset-level metrics: Fréchet distance between embedding sets, the
//! optimization success rate, and embedding export for plotting.

mod export;
mod fid;

pub use export::{export_embeddings, import_embeddings, ExportedEmbedding};
pub use fid::{fid_datasets, frechet_distance, moments, MomentSummary, COVARIANCE_EPSILON};

use crate::classifier::{predict, EnsembleModel, Prediction};
use crate::corpus::Label;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Fraction of predictions labeled Acceptable.
pub fn success_rate_of(predictions: &[Prediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(predictions.iter().filter(|p| p.label == Label::Acceptable).count() as f64 / predictions.len() as f64)
}

/// Fraction of `vectors` the model classifies as Acceptable.
pub fn success_rate(model: &EnsembleModel, vectors: &[EmbeddingVector]) -> Result<f64> {
    let predictions = vectors.iter().map(|v| predict(model, v)).collect::<Result<Vec<_>>>()?;
    success_rate_of(&predictions)
}
