use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::error::{Error, Result};

pub const HASHING_DIM: usize = 256;

/// Anything that turns texts into embedding vectors.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;

    /// Raw provider call. Callers should go through [`embed_texts`], which
    /// validates count, order and dimensions.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Embeds `texts`, one vector per input in input order.
pub fn embed_texts(provider: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::InvalidInput("no texts to embed".into()));
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::ProviderError(format!(
            "provider returned {} vectors for {} inputs",
            vectors.len(),
            texts.len()
        )));
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimMismatch { expected: dim, actual: bad.dim() });
    }
    Ok(vectors)
}

/// Offline embedder: signed feature hashing of lowercase word unigrams,
/// L2-normalized. Deterministic across platforms and releases.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    model_id: String,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(HASHING_DIM)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hashing dimension must be positive");
        Self { dim, model_id: format!("hashing-unigram-{dim}") }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0f64; self.dim];
        let lower = text.to_lowercase();
        let mut any = false;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.accumulate(token, &mut acc);
            any = true;
        }
        if !any {
            self.accumulate("\u{0}empty", &mut acc);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Colliding tokens with opposite signs cancelled out entirely.
            acc[0] = 1.0;
        } else {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::from_f64(&acc, self.model_id.clone()).expect("hashing output is finite")
    }

    fn accumulate(&self, token: &str, acc: &mut [f64]) {
        let h = fnv1a(token.as_bytes());
        let slot = (h % self.dim as u64) as usize;
        acc[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Embedder for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    /// Full URL of the embeddings route, e.g. `http://host:8000/v1/embeddings`.
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_timeout() -> u64 {
    60
}

fn default_batch() -> usize {
    64
}

/// Client for an OpenAI-compatible embeddings endpoint.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn call(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut req = self.client.post(&self.config.url).json(&EmbeddingRequest { model: &self.config.model, input: texts });
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Error::ProviderError(format!("embeddings endpoint returned {status}: {body}")));
        }
        let parsed: EmbeddingResponse =
            resp.json().map_err(|e| Error::ProviderError(format!("unreadable embeddings response: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::ProviderError(format!(
                "provider returned {} vectors for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for datum in parsed.data {
            let slot = slots
                .get_mut(datum.index)
                .ok_or_else(|| Error::ProviderError(format!("index {} out of range", datum.index)))?;
            if slot.is_some() {
                return Err(Error::ProviderError(format!("index {} returned twice", datum.index)));
            }
            *slot = Some(
                EmbeddingVector::new(datum.embedding, self.config.model.clone())
                    .map_err(|e| Error::ProviderError(e.to_string()))?,
            );
        }
        Ok(slots.into_iter().map(|s| s.expect("every index filled")).collect())
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.call(chunk)?);
        }
        Ok(out)
    }
}
