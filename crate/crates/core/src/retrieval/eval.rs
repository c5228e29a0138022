use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{rerank, Candidate, Scorer};
use crate::embedding::{EmbeddingRecord, EmbeddingVector, Metric, VectorStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub vector: EmbeddingVector,
    /// Query text, required only for reranked evaluation.
    pub text: Option<String>,
    pub gold_id: String,
    /// Record to hide from the query, typically the query's own revision.
    pub exclude_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: usize,
    /// Fraction whose rank-1 hit shares the gold record's provision.
    pub provision_accuracy: f64,
    /// Fraction with the gold record among the first k hits.
    pub top_k_accuracy: BTreeMap<usize, f64>,
}

fn validate(store: &VectorStore, queries: &[EvalQuery], ks: &[usize]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::EmptySet);
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidInput("ks must be non-empty positive integers".into()));
    }
    if let Some(q) = queries.iter().find(|q| !store.contains(&q.gold_id)) {
        return Err(Error::UnknownGoldId(q.gold_id.clone()));
    }
    Ok(())
}

fn ranked_ids(store: &VectorStore, q: &EvalQuery, depth: usize) -> Result<Vec<String>> {
    let exclude = |r: &EmbeddingRecord| q.exclude_id.as_deref() != Some(r.revision_id.as_str());
    Ok(store.query(&q.vector, Metric::Cosine, depth, Some(&exclude))?.iter().map(|h| h.record.revision_id.clone()).collect())
}

fn tally(store: &VectorStore, queries: &[EvalQuery], ks: &[usize], rankings: &[Vec<String>]) -> RetrievalReport {
    let n = queries.len() as f64;
    let provision_hits = queries
        .iter()
        .zip(rankings)
        .filter(|(q, ranked)| {
            let gold = &store.get(&q.gold_id).expect("validated").provision_number;
            ranked.first().and_then(|id| store.get(id)).is_some_and(|r| &r.provision_number == gold)
        })
        .count();
    let top_k_accuracy = ks
        .iter()
        .map(|&k| {
            let hits = queries.iter().zip(rankings).filter(|(q, ranked)| ranked.iter().take(k).any(|id| *id == q.gold_id)).count();
            (k, hits as f64 / n)
        })
        .collect();
    RetrievalReport { queries: queries.len(), provision_accuracy: provision_hits as f64 / n, top_k_accuracy }
}

/// Cosine retrieval accuracy of gold records at each cutoff in `ks`.
pub fn evaluate_retrieval(store: &VectorStore, queries: &[EvalQuery], ks: &[usize]) -> Result<RetrievalReport> {
    validate(store, queries, ks)?;
    let depth = *ks.iter().max().unwrap();
    let rankings = queries.iter().map(|q| ranked_ids(store, q, depth)).collect::<Result<Vec<_>>>()?;
    Ok(tally(store, queries, ks, &rankings))
}

/// Retrieves `depth` candidates per query, reranks them with `scorer`, and
/// scores the reranked order.
pub fn evaluate_reranked(
    store: &VectorStore,
    texts: &HashMap<String, String>,
    scorer: &dyn Scorer,
    queries: &[EvalQuery],
    depth: usize,
    ks: &[usize],
) -> Result<RetrievalReport> {
    validate(store, queries, ks)?;
    let mut rankings = Vec::with_capacity(queries.len());
    for q in queries {
        let query_text = q.text.as_deref().ok_or_else(|| Error::InvalidInput("reranked evaluation needs query text".into()))?;
        let candidates = ranked_ids(store, q, depth)?
            .into_iter()
            .map(|id| {
                let text = texts.get(&id).cloned().ok_or_else(|| Error::InvalidInput(format!("no text for {id}")))?;
                Ok(Candidate { id, text, score: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        let keep = candidates.len();
        rankings.push(rerank(scorer, query_text, candidates, keep)?.into_iter().map(|c| c.id).collect());
    }
    Ok(tally(store, queries, ks, &rankings))
}
