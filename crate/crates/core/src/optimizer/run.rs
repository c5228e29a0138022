use serde::{Deserialize, Serialize};

use super::demos::{select_demonstrations, DemoPool};
use super::prompt::{build_optimization_prompt, parse_candidate, OptimizationDemo};
use super::OptimizationConfig;
use crate::classifier::{predict, EnsembleModel};
use crate::embedding::{embed_texts, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::llm::{ChatModel, ChatRequest};
use crate::util::{bounded_map, fingerprint};

/// Scores candidate rewrites; higher is more acceptable, within [0, 1].
pub trait RewardModel: Send + Sync {
    fn rewards(&self, texts: &[String]) -> Result<Vec<f64>>;
}

/// Reward = the ensemble's probability that the text is acceptable.
pub struct ClassifierReward<'a> {
    pub model: &'a EnsembleModel,
    pub embedder: &'a dyn Embedder,
}

impl RewardModel for ClassifierReward<'_> {
    fn rewards(&self, texts: &[String]) -> Result<Vec<f64>> {
        embed_texts(self.embedder, texts)?
            .iter()
            .map(|v| predict(self.model, v).map(|p| p.probability_acceptable))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationQuery {
    pub revision_id: String,
    pub text: String,
    pub vector: EmbeddingVector,
    /// Text of clauses from the same contract judged relevant.
    pub related_clauses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    /// Position among the N samples, which also fixes its seed.
    pub sample_index: usize,
    pub text: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub source_revision_id: String,
    pub candidates: Vec<ScoredCandidate>,
    /// Index into `candidates` of the highest reward, lowest index on ties.
    pub chosen_index: usize,
    pub prompt_fingerprint: String,
    pub demonstration_ids: Vec<String>,
    /// Samples dropped as malformed or failed.
    pub dropped: usize,
}

impl OptimizationResult {
    pub fn chosen(&self) -> &ScoredCandidate {
        &self.candidates[self.chosen_index]
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Samples `best_of_n` rewrites with seeds `seed + i` and keeps the one with
/// the highest reward. Unusable samples are dropped; if none survive the call
/// fails with `AllCandidatesMalformed`.
pub fn optimize(
    llm: &dyn ChatModel,
    reward: &dyn RewardModel,
    pool: &DemoPool,
    query: &OptimizationQuery,
    config: &OptimizationConfig,
) -> Result<OptimizationResult> {
    if config.best_of_n == 0 {
        return Err(Error::InvalidInput("best_of_n must be at least 1".into()));
    }
    let demos = select_demonstrations(pool, &query.vector, Some(&query.revision_id), config.n_demonstrations)?;
    let rendered: Vec<OptimizationDemo> = demos.iter().map(|t| t.demo.clone()).collect();
    let related: &[String] = if config.include_related_clauses { &query.related_clauses } else { &[] };
    let prompt = build_optimization_prompt(&rendered, related, &query.text)?;

    let slots: Vec<usize> = (0..config.best_of_n).collect();
    let replies = bounded_map(&slots, config.max_in_flight, |_, &i| {
        llm.complete(&ChatRequest::user(prompt.clone(), config.sampling, Some(config.seed.wrapping_add(i as u64))))
    });
    let mut kept = Vec::new();
    let mut dropped = 0;
    for (i, reply) in replies.into_iter().enumerate() {
        match reply.and_then(|r| parse_candidate(&r)) {
            Ok(text) => kept.push((i, text)),
            Err(e @ Error::ProviderUnavailable(_)) => return Err(e),
            Err(e) => {
                log::debug!("candidate {i} for {} dropped: {e}", query.revision_id);
                dropped += 1;
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::AllCandidatesMalformed(config.best_of_n));
    }
    let texts: Vec<String> = kept.iter().map(|(_, t)| t.clone()).collect();
    let rewards = reward.rewards(&texts)?;
    if rewards.len() != texts.len() || rewards.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::ProviderError("reward model returned an invalid score vector".into()));
    }
    let candidates: Vec<ScoredCandidate> = kept
        .into_iter()
        .zip(&rewards)
        .map(|((sample_index, text), &reward)| ScoredCandidate { sample_index, text, reward })
        .collect();
    Ok(OptimizationResult {
        source_revision_id: query.revision_id.clone(),
        chosen_index: argmax(&rewards),
        candidates,
        prompt_fingerprint: fingerprint(&prompt),
        demonstration_ids: demos.iter().map(|t| t.id.clone()).collect(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub revision_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub contract_id: String,
    pub results: Vec<OptimizationResult>,
    pub failures: Vec<BatchFailure>,
    /// Share of flagged revisions the reward model already accepts; null with no flags.
    pub success_rate_before: Option<f64>,
    /// Same share after rewriting; a failed rewrite counts with its original text.
    pub success_rate_after: Option<f64>,
}

/// Optimizes every flagged revision independently. Per-revision errors are
/// collected in `failures`. Output is ordered by revision id.
pub fn batch_optimize(
    llm: &dyn ChatModel,
    reward: &dyn RewardModel,
    pool: &DemoPool,
    contract_id: &str,
    flagged: &[OptimizationQuery],
    config: &OptimizationConfig,
) -> Result<BatchReport> {
    let mut flagged: Vec<&OptimizationQuery> = flagged.iter().collect();
    flagged.sort_by(|a, b| a.revision_id.cmp(&b.revision_id));
    let mut report = BatchReport {
        contract_id: contract_id.to_string(),
        results: Vec::new(),
        failures: Vec::new(),
        success_rate_before: None,
        success_rate_after: None,
    };
    if flagged.is_empty() {
        return Ok(report);
    }
    let originals: Vec<String> = flagged.iter().map(|q| q.text.clone()).collect();
    let before = reward.rewards(&originals)?;

    let inner = OptimizationConfig { max_in_flight: 1, ..config.clone() };
    let outcomes = bounded_map(&flagged, config.max_in_flight, |_, q| optimize(llm, reward, pool, q, &inner));
    let mut after = before.clone();
    for (i, (q, outcome)) in flagged.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(result) => {
                after[i] = result.chosen().reward;
                report.results.push(result);
            }
            Err(e) => report.failures.push(BatchFailure {
                revision_id: q.revision_id.clone(),
                kind: e.kind().to_string(),
                message: e.to_string(),
            }),
        }
    }
    let rate = |rs: &[f64]| rs.iter().filter(|&&r| r >= 0.5).count() as f64 / rs.len() as f64;
    report.success_rate_before = Some(rate(&before));
    report.success_rate_after = Some(rate(&after));
    Ok(report)
}
