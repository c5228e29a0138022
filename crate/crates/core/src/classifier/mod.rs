//! Acceptability classifier: k-means routing with one logistic head per
//! cluster, plus an LLM zero-shot variant.

mod ensemble;
mod eval;
mod kmeans;
mod logistic;
mod zero_shot;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

pub use ensemble::{predict, predict_values, split_train_val, train_ensemble, EnsembleModel, TrainingSummary, MODEL_VERSION};
pub use eval::{evaluate_classifier, evaluate_predictions, ClassifierReport, Confusion};
pub use kmeans::{kmeans, KMeans};
pub use logistic::{logistic_loss_and_grad, sigmoid, train_logistic, HeadKind, LogisticFit, LogisticHead};
pub use zero_shot::{build_zero_shot_prompt, parse_zero_shot, zero_shot_classify, ZeroShotResult};

/// Predictions closer than this to 0.5 are routed to an expert.
pub const AMBIGUITY_MARGIN: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { k: 8, learning_rate: 0.1, epochs: 500, l2_lambda: 1e-3, seed: 0, val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceBand {
    Confident,
    Ambiguous,
}

impl ConfidenceBand {
    pub fn of(probability_acceptable: f64) -> Self {
        if (probability_acceptable - 0.5).abs() < AMBIGUITY_MARGIN {
            Self::Ambiguous
        } else {
            Self::Confident
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probability_acceptable: f64,
    pub cluster_id: usize,
    pub routing_similarity: f64,
}

impl Prediction {
    pub fn band(&self) -> ConfidenceBand {
        ConfidenceBand::of(self.probability_acceptable)
    }
}

pub(crate) fn label_for(probability_acceptable: f64) -> Label {
    if probability_acceptable >= 0.5 {
        Label::Acceptable
    } else {
        Label::Unacceptable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        assert_eq!(ConfidenceBand::of(0.5), ConfidenceBand::Ambiguous);
        assert_eq!(ConfidenceBand::of(0.64), ConfidenceBand::Ambiguous);
        assert_eq!(ConfidenceBand::of(0.36), ConfidenceBand::Ambiguous);
        assert_eq!(ConfidenceBand::of(0.66), ConfidenceBand::Confident);
        assert_eq!(ConfidenceBand::of(0.01), ConfidenceBand::Confident);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(label_for(0.5), Label::Acceptable);
        assert_eq!(label_for(0.4999999), Label::Unacceptable);
    }

    #[test]
    fn config_defaults_and_json() {
        let c = TrainConfig::default();
        assert_eq!((c.k, c.learning_rate, c.epochs, c.l2_lambda, c.val_fraction), (8, 0.1, 500, 1e-3, 0.1));
        let parsed: TrainConfig = serde_json::from_str(r#"{"K": 3, "seed": 4}"#).unwrap();
        assert_eq!((parsed.k, parsed.seed, parsed.epochs), (3, 4, 500));
    }
}
