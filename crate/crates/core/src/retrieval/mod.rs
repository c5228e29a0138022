//! Precedent retrieval, cross-encoder reranking, graded training pairs for
//! the reranker, and intra-contract clause dependencies.

mod dependencies;
mod eval;
mod graded;
mod scorer;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, EmbeddingVector, Hit, Metric, VectorStore};
use crate::error::{Error, Result};

pub use dependencies::{
    build_dependency_prompt, extract_clause_dependencies, extract_json_object, related_clauses, resolve_reference,
    ClauseDependency, ClauseEvidence,
};
pub use eval::{evaluate_reranked, evaluate_retrieval, EvalQuery, RetrievalReport};
pub use graded::{build_graded_pairs, graded_label, write_pairs_jsonl, PairSampling, ScoredPair, GRADED_LABELS};
pub use scorer::{ConstantScorer, EmbeddingScorer, HttpScorer, HttpScorerConfig, Scorer};

pub const DEFAULT_RETRIEVAL_DEPTH: usize = 10;
pub const DEFAULT_RERANK_KEEP: usize = 5;
pub const DEFAULT_DEPENDENCY_THRESHOLD: f64 = 0.5;

/// A retrieved text carrying its current ranking score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
    pub score: f64,
}

/// Cosine top-k over the store, never returning the query's own record.
pub fn retrieve_precedents<'s>(
    store: &'s VectorStore,
    query_id: &str,
    query: &EmbeddingVector,
    top_k: usize,
) -> Result<Vec<Hit<'s>>> {
    if let Some(model) = store.model_id() {
        if model != query.model_id() {
            return Err(Error::ModelMismatch { expected: model.to_string(), actual: query.model_id().to_string() });
        }
    }
    let not_self = |r: &EmbeddingRecord| r.revision_id != query_id;
    store.query(query, Metric::Cosine, top_k, Some(&not_self))
}

/// Reorders candidates by descending scorer output (ascending id on ties)
/// and keeps the first `keep`.
pub fn rerank(scorer: &dyn Scorer, query: &str, candidates: Vec<Candidate>, keep: usize) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to rerank".into()));
    }
    if keep == 0 || keep > candidates.len() {
        return Err(Error::InvalidInput(format!("keep must be in 1..={}, got {keep}", candidates.len())));
    }
    let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    let scores = scorer.score(query, &texts)?;
    scorer::validate_scores(&scores, texts.len())?;

    let mut out: Vec<Candidate> =
        candidates.into_iter().zip(scores).map(|(c, score)| Candidate { score, ..c }).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    out.truncate(keep);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    struct Lookup(Vec<(&'static str, f64)>);

    impl Scorer for Lookup {
        fn score(&self, _q: &str, texts: &[String]) -> Result<Vec<f64>> {
            Ok(texts.iter().map(|t| self.0.iter().find(|(k, _)| k == t).map_or(0.0, |(_, s)| *s)).collect())
        }
    }

    fn cands(ids: &[&str]) -> Vec<Candidate> {
        ids.iter().map(|id| Candidate { id: id.to_string(), text: format!("text-{id}"), score: 0.0 }).collect()
    }

    #[test]
    fn graded_scores_order_candidates() {
        let scorer = Lookup(vec![("text-para", 1.0), ("text-same", 0.5), ("text-other", 0.0)]);
        let out = rerank(&scorer, "q", cands(&["other", "same", "para"]), 3).unwrap();
        let ids: Vec<_> = out.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["para", "same", "other"]);
    }

    #[test]
    fn constant_scorer_orders_by_id() {
        let out = rerank(&ConstantScorer(0.4), "q", cands(&["c", "a", "b"]), 3).unwrap();
        let ids: Vec<_> = out.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn keep_one_is_argmax() {
        let scores = [0.1, 0.7, 0.3, 0.95, 0.2, 0.6, 0.0, 0.94, 0.5, 0.4];
        let table: Vec<(&'static str, f64)> = (0..10)
            .map(|i| (Box::leak(format!("text-{i}").into_boxed_str()) as &'static str, scores[i]))
            .collect();
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let out = rerank(&Lookup(table), "q", cands(&refs), 1).unwrap();
        let argmax = (0..10).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, argmax.to_string());
    }

    #[test]
    fn rerank_preconditions() {
        assert!(rerank(&ConstantScorer(0.0), "q", vec![], 1).is_err());
        assert!(rerank(&ConstantScorer(0.0), "q", cands(&["a"]), 2).is_err());
        assert!(rerank(&ConstantScorer(2.0), "q", cands(&["a"]), 1).is_err());
    }

    #[test]
    fn precedents_skip_self_and_check_model() {
        let v = |x: f32, y: f32| EmbeddingVector::new(vec![x, y], "m").unwrap();
        let rec = |id: &str, vec| EmbeddingRecord { revision_id: id.into(), vector: vec, label: Label::Acceptable, provision_number: "1".into() };
        let store = VectorStore::from_records([rec("q", v(1.0, 0.0)), rec("dup", v(1.0, 0.0)), rec("far", v(0.0, 1.0))]).unwrap();
        let hits = retrieve_precedents(&store, "q", &v(1.0, 0.0), 5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].record.revision_id, "dup");

        let other = EmbeddingVector::new(vec![1.0, 0.0], "other").unwrap();
        assert!(matches!(retrieve_precedents(&store, "q", &other, 5), Err(Error::ModelMismatch { .. })));
        assert!(matches!(retrieve_precedents(&VectorStore::new(), "q", &v(1.0, 0.0), 5), Err(Error::EmptyStore)));
    }
}
