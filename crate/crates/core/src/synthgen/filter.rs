use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embedding::{EmbeddingVector, Metric, VectorStore};
use crate::error::{Error, Result};

pub const DEFAULT_FILTER_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Keep,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnVote {
    pub verdict: Verdict,
    pub agreeing: usize,
    pub neighbours: usize,
}

/// Label agreement among the `k` nearest labeled records (L2). Keeps the
/// candidate only on a strict majority; ties and unlabeled candidates are
/// discarded. Fewer than `k` labeled records means all of them vote.
pub fn knn_vote(label: Label, vector: &EmbeddingVector, real_store: &VectorStore, k: usize) -> Result<KnnVote> {
    if let Some(model) = real_store.model_id() {
        if model != vector.model_id() {
            return Err(Error::ModelMismatch { expected: model.to_string(), actual: vector.model_id().to_string() });
        }
    }
    let labeled = |r: &crate::embedding::EmbeddingRecord| r.label.is_labeled();
    let hits = real_store.query(vector, Metric::L2, k, Some(&labeled))?;
    let agreeing = hits.iter().filter(|h| h.record.label == label).count();
    let verdict = if label.is_labeled() && 2 * agreeing > hits.len() { Verdict::Keep } else { Verdict::Discard };
    Ok(KnnVote { verdict, agreeing, neighbours: hits.len() })
}

pub fn knn_filter(label: Label, vector: &EmbeddingVector, real_store: &VectorStore, k: usize) -> Result<Verdict> {
    knn_vote(label, vector, real_store, k).map(|v| v.verdict)
}
