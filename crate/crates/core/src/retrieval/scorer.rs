use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, embed_texts, Embedder};
use crate::error::{Error, Result};
use crate::util::bounded_map;

/// Cross-encoder style relevance scorer: one score in [0, 1] per text,
/// each read jointly with the query.
pub trait Scorer: Send + Sync {
    fn score(&self, query: &str, texts: &[String]) -> Result<Vec<f64>>;
}

impl<T: Scorer + ?Sized> Scorer for Arc<T> {
    fn score(&self, query: &str, texts: &[String]) -> Result<Vec<f64>> {
        (**self).score(query, texts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpScorerConfig {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> u64 {
    60
}

fn default_batch() -> usize {
    32
}

fn default_in_flight() -> usize {
    4
}

/// Client for a scorer service: `POST {query, texts}` answering `{scores}`.
pub struct HttpScorer {
    config: HttpScorerConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl HttpScorer {
    pub fn new(config: HttpScorerConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::ScorerUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn call(&self, query: &str, texts: &[String]) -> Result<Vec<f64>> {
        let mut req = self.client.post(&self.config.url).json(&ScoreRequest { query, texts });
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::ScorerUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::ScorerUnavailable(format!("scorer returned {status}")));
        }
        let parsed: ScoreResponse =
            resp.json().map_err(|e| Error::ProviderError(format!("unreadable scorer response: {e}")))?;
        validate_scores(&parsed.scores, texts.len())?;
        Ok(parsed.scores)
    }
}

pub(crate) fn validate_scores(scores: &[f64], expected: usize) -> Result<()> {
    if scores.len() != expected {
        return Err(Error::ProviderError(format!("scorer returned {} scores for {expected} texts", scores.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::ProviderError(format!("score {bad} outside [0, 1]")));
    }
    Ok(())
}

impl Scorer for HttpScorer {
    fn score(&self, query: &str, texts: &[String]) -> Result<Vec<f64>> {
        let batches: Vec<&[String]> = texts.chunks(self.config.batch_size.max(1)).collect();
        let results = bounded_map(&batches, self.config.max_in_flight, |_, batch| self.call(query, batch));
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// Offline scorer: cosine between embeddings of query and text, clamped to [0, 1].
pub struct EmbeddingScorer {
    embedder: Arc<dyn Embedder>,
}

impl EmbeddingScorer {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { embedder }
    }
}

impl Scorer for EmbeddingScorer {
    fn score(&self, query: &str, texts: &[String]) -> Result<Vec<f64>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut all = Vec::with_capacity(texts.len() + 1);
        all.push(query.to_string());
        all.extend_from_slice(texts);
        let vectors = embed_texts(self.embedder.as_ref(), &all)?;
        vectors[1..].iter().map(|v| Ok(cosine(&vectors[0], v)?.clamp(0.0, 1.0))).collect()
    }
}

/// Scores every text with the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _query: &str, texts: &[String]) -> Result<Vec<f64>> {
        Ok(vec![self.0; texts.len()])
    }
}
