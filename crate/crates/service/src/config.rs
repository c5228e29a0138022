//! Workspace configuration: `config.json` plus `REVKIT_*` environment
//! overrides.

use std::path::Path;

use revkit_core::classifier::{TrainConfig, AMBIGUITY_MARGIN};
use revkit_core::embedding::{HttpEmbedderConfig, HASHING_DIM};
use revkit_core::llm::HttpChatConfig;
use revkit_core::optimizer::OptimizationConfig;
use revkit_core::retrieval::{HttpScorerConfig, DEFAULT_RERANK_KEEP, DEFAULT_RETRIEVAL_DEPTH};
use revkit_core::synthgen::GenerationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSettings {
    /// Built-in feature-hashing embedder; needs no network.
    Hashing { dim: usize },
    Http(HttpEmbedderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmSettings {
    /// No chat model; generation and optimization fail with ProviderUnavailable.
    None,
    Http(HttpChatConfig),
    /// Replays `replies` in a cycle. For offline runs and tests.
    Scripted { replies: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSettings {
    /// Cosine between embeddings of the two texts.
    Embedding,
    Http(HttpScorerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub embedding: EmbeddingSettings,
    pub llm: LlmSettings,
    pub scorer: ScorerSettings,
    pub classifier: TrainConfig,
    pub generation: GenerationConfig,
    pub optimization: OptimizationConfig,
    /// Half-width of the band around 0.5 whose predictions go to review.
    pub ambiguity_margin: f64,
    /// New decisions needed before a retrain snapshot runs.
    pub retrain_min_decisions: usize,
    pub retrieval_depth: usize,
    pub rerank_keep: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            embedding: EmbeddingSettings::Hashing { dim: HASHING_DIM },
            llm: LlmSettings::None,
            scorer: ScorerSettings::Embedding,
            classifier: TrainConfig::default(),
            generation: GenerationConfig::default(),
            optimization: OptimizationConfig::default(),
            ambiguity_margin: AMBIGUITY_MARGIN,
            retrain_min_decisions: 5,
            retrieval_depth: DEFAULT_RETRIEVAL_DEPTH,
            rerank_keep: DEFAULT_RERANK_KEEP,
        }
    }
}

fn parse<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| ServiceError::Validation(format!("{name}={value:?} is not a valid value")))
}

impl Config {
    /// Reads `path` if it exists, otherwise starts from defaults, then
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = if path.exists() {
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| ServiceError::Validation(format!("{}: {e}", path.display())))?
        } else {
            Config::default()
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Overrides from `REVKIT_*` variables. Setting an endpoint URL switches
    /// that provider to HTTP.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(url) = var("REVKIT_EMBEDDING_URL") {
            let model = var("REVKIT_EMBEDDING_MODEL").unwrap_or_else(|| "embedding".into());
            self.embedding = EmbeddingSettings::Http(HttpEmbedderConfig {
                url,
                model,
                token: var("REVKIT_EMBEDDING_TOKEN"),
                timeout_secs: 60,
                batch_size: 64,
            });
        } else if let (Some(model), EmbeddingSettings::Http(c)) = (var("REVKIT_EMBEDDING_MODEL"), &mut self.embedding) {
            c.model = model;
        }
        if let Some(url) = var("REVKIT_LLM_URL") {
            let model = var("REVKIT_LLM_MODEL").unwrap_or_else(|| "llm".into());
            self.llm = LlmSettings::Http(HttpChatConfig {
                url,
                model,
                token: var("REVKIT_LLM_TOKEN"),
                timeout_secs: 300,
                send_top_k: false,
            });
        } else if let (Some(model), LlmSettings::Http(c)) = (var("REVKIT_LLM_MODEL"), &mut self.llm) {
            c.model = model;
        }
        if let Some(url) = var("REVKIT_SCORER_URL") {
            self.scorer = ScorerSettings::Http(HttpScorerConfig {
                url,
                token: var("REVKIT_SCORER_TOKEN"),
                timeout_secs: 60,
                batch_size: 32,
                max_in_flight: 4,
            });
        }
        if let Some(v) = var("REVKIT_SEED") {
            let seed: u64 = parse("REVKIT_SEED", &v)?;
            self.classifier.seed = seed;
            self.generation.seed = seed;
            self.optimization.seed = seed;
        }
        if let Some(v) = var("REVKIT_AMBIGUITY_MARGIN") {
            self.ambiguity_margin = parse("REVKIT_AMBIGUITY_MARGIN", &v)?;
        }
        if let Some(v) = var("REVKIT_RETRAIN_MIN_DECISIONS") {
            self.retrain_min_decisions = parse("REVKIT_RETRAIN_MIN_DECISIONS", &v)?;
        }
        if let Some(v) = var("REVKIT_CLUSTERS") {
            self.classifier.k = parse("REVKIT_CLUSTERS", &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ServiceError::Validation(m.to_string()));
        if !(0.0..0.5).contains(&self.ambiguity_margin) {
            return bad("ambiguity_margin must be in [0, 0.5)");
        }
        if self.classifier.k == 0 {
            return bad("classifier.K must be at least 1");
        }
        if !(0.0..1.0).contains(&self.classifier.val_fraction) {
            return bad("classifier.val_fraction must be in [0, 1)");
        }
        if self.optimization.best_of_n == 0 || self.optimization.n_demonstrations == 0 {
            return bad("optimization.best_of_n and n_demonstrations must be at least 1");
        }
        if self.generation.n_demonstrations == 0 {
            return bad("generation.n_demonstrations must be at least 1");
        }
        if let EmbeddingSettings::Hashing { dim: 0 } = self.embedding {
            return bad("embedding.dim must be positive");
        }
        if let LlmSettings::Scripted { replies } = &self.llm {
            if replies.is_empty() {
                return bad("scripted llm needs at least one reply");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn defaults_are_offline() {
        let c = Config::default();
        assert_eq!(c.embedding, EmbeddingSettings::Hashing { dim: 256 });
        assert_eq!(c.llm, LlmSettings::None);
        assert_eq!(c.classifier.k, 8);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: Config = serde_json::from_str(
            r#"{"llm": {"kind": "scripted", "replies": ["x"]}, "classifier": {"K": 2}, "retrain_min_decisions": 1}"#,
        )
        .unwrap();
        assert_eq!(c.classifier.k, 2);
        assert_eq!(c.classifier.epochs, 500);
        assert_eq!(c.retrain_min_decisions, 1);
        assert!(matches!(c.llm, LlmSettings::Scripted { .. }));
    }

    #[test]
    fn env_overrides() {
        let vars: HashMap<&str, &str> = HashMap::from([
            ("REVKIT_LLM_URL", "http://h/v1/chat/completions"),
            ("REVKIT_LLM_MODEL", "m1"),
            ("REVKIT_SEED", "42"),
            ("REVKIT_AMBIGUITY_MARGIN", "0.2"),
        ]);
        let mut c = Config::default();
        c.apply_env(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        match &c.llm {
            LlmSettings::Http(h) => assert_eq!((h.url.as_str(), h.model.as_str()), ("http://h/v1/chat/completions", "m1")),
            other => panic!("{other:?}"),
        }
        assert_eq!((c.classifier.seed, c.optimization.seed, c.ambiguity_margin), (42, 42, 0.2));
        let mut c = Config::default();
        let err = c.apply_env(|k| (k == "REVKIT_SEED").then(|| "abc".to_string())).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn invalid_values_rejected() {
        let c = Config { ambiguity_margin: 0.7, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
