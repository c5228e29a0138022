use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::logistic::{train_logistic, HeadKind, LogisticHead};
use super::{label_for, Prediction, TrainConfig};
use crate::embedding::{dot_f64, normalize_f64, EmbeddingRecord, EmbeddingVector};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub train_count: usize,
    pub val_count: usize,
    pub cluster_sizes: Vec<usize>,
    /// Acceptable examples per cluster in the training split.
    pub cluster_acceptable: Vec<usize>,
    pub final_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub cluster_val_accuracy: Vec<Option<f64>>,
    pub kmeans_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct EnsembleModel {
    /// Embedding model the vectors came from.
    pub model_id: String,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub heads: Vec<LogisticHead>,
    pub train_config: TrainConfig,
    pub metrics: TrainingSummary,
}

impl EnsembleModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() || self.centroids.len() != self.heads.len() {
            return Err(Error::InvalidInput("model needs one head per centroid and at least one".into()));
        }
        if self.centroids.iter().any(|c| c.len() != self.dim) || self.heads.iter().any(|h| h.weights.len() != self.dim) {
            return Err(Error::InvalidInput("centroid and head dimensions must equal the model dimension".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model_id: String,
    dim: usize,
    k: usize,
    /// Little-endian f64, K rows of `dim`.
    centroids: String,
    weights: String,
    biases: String,
    head_kinds: Vec<HeadKind>,
    train_config: TrainConfig,
    metrics: TrainingSummary,
}

fn encode(values: impl Iterator<Item = f64>) -> String {
    B64.encode(values.flat_map(f64::to_le_bytes).collect::<Vec<u8>>())
}

fn decode(text: &str, expected: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(text).map_err(|e| format!("{what}: {e}"))?;
    if bytes.len() != expected * 8 {
        return Err(format!("{what}: expected {expected} values, found {} bytes", bytes.len()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl From<EnsembleModel> for ModelFile {
    fn from(m: EnsembleModel) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            dim: m.dim,
            k: m.k(),
            centroids: encode(m.centroids.iter().flatten().copied()),
            weights: encode(m.heads.iter().flat_map(|h| h.weights.iter().copied())),
            biases: encode(m.heads.iter().map(|h| h.bias)),
            head_kinds: m.heads.iter().map(|h| h.kind).collect(),
            model_id: m.model_id,
            train_config: m.train_config,
            metrics: m.metrics,
        }
    }
}

impl TryFrom<ModelFile> for EnsembleModel {
    type Error = String;

    fn try_from(f: ModelFile) -> std::result::Result<Self, String> {
        if f.version != MODEL_VERSION {
            return Err(format!("unsupported model version {}", f.version));
        }
        if f.k == 0 || f.dim == 0 || f.head_kinds.len() != f.k {
            return Err("model must have K >= 1 heads of positive dimension".into());
        }
        let centroids = decode(&f.centroids, f.k * f.dim, "centroids")?;
        let weights = decode(&f.weights, f.k * f.dim, "weights")?;
        let biases = decode(&f.biases, f.k, "biases")?;
        let heads = weights
            .chunks_exact(f.dim)
            .zip(biases)
            .zip(f.head_kinds)
            .map(|((w, bias), kind)| LogisticHead { weights: w.to_vec(), bias, kind })
            .collect();
        Ok(EnsembleModel {
            model_id: f.model_id,
            dim: f.dim,
            centroids: centroids.chunks_exact(f.dim).map(<[f64]>::to_vec).collect(),
            heads,
            train_config: f.train_config,
            metrics: f.metrics,
        })
    }
}

/// Seeded shuffle split. Both index lists come back in ascending order.
pub fn split_train_val(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidInput(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// k-means over the normalized training vectors, then one logistic head per
/// cluster. Unlabeled records are ignored.
pub fn train_ensemble(records: &[EmbeddingRecord], config: &TrainConfig) -> Result<EnsembleModel> {
    let labeled: Vec<&EmbeddingRecord> = records.iter().filter(|r| r.label.is_labeled()).collect();
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if labeled.len() < 2 * k {
        return Err(Error::TooFewPoints { needed: 2 * k, got: labeled.len() });
    }
    let dim = labeled[0].vector.dim();
    let model_id = labeled[0].vector.model_id().to_string();
    for r in &labeled {
        if r.vector.dim() != dim {
            return Err(Error::DimMismatch { expected: dim, actual: r.vector.dim() });
        }
        if r.vector.model_id() != model_id {
            return Err(Error::ModelMismatch { expected: model_id, actual: r.vector.model_id().to_string() });
        }
    }
    let x: Vec<Vec<f64>> = labeled.iter().map(|r| normalize_f64(&r.vector.to_f64())).collect::<Result<_>>()?;
    let y: Vec<bool> = labeled.iter().map(|r| r.label == crate::corpus::Label::Acceptable).collect();

    let (train, val) = split_train_val(labeled.len(), config.val_fraction, config.seed)?;
    let train_x: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let km = kmeans(&train_x, k, config.seed)?;

    let mut heads = Vec::with_capacity(k);
    let mut final_losses = Vec::with_capacity(k);
    let mut cluster_sizes = vec![0; k];
    let mut cluster_acceptable = vec![0; k];
    for c in 0..k {
        let members: Vec<usize> = (0..train.len()).filter(|&j| km.assignments[j] == c).collect();
        let cx: Vec<Vec<f64>> = members.iter().map(|&j| train_x[j].clone()).collect();
        let cy: Vec<bool> = members.iter().map(|&j| y[train[j]]).collect();
        cluster_sizes[c] = members.len();
        cluster_acceptable[c] = cy.iter().filter(|&&v| v).count();
        let fit = train_logistic(&cx, &cy, dim, config.learning_rate, config.epochs, config.l2_lambda);
        final_losses.push(fit.final_loss);
        heads.push(fit.head);
    }

    let mut model = EnsembleModel {
        model_id,
        dim,
        centroids: km.centroids,
        heads,
        train_config: *config,
        metrics: TrainingSummary {
            train_count: train.len(),
            val_count: val.len(),
            cluster_sizes,
            cluster_acceptable,
            final_losses,
            train_accuracy: 0.0,
            val_accuracy: None,
            cluster_val_accuracy: vec![None; k],
            kmeans_iterations: km.iterations,
        },
    };

    let accuracy_over = |idx: &[usize], model: &EnsembleModel| -> Result<(f64, Vec<(usize, usize)>)> {
        let mut per_cluster = vec![(0usize, 0usize); k];
        let mut correct = 0;
        for &i in idx {
            let p = route_and_score(model, &x[i]);
            let hit = (p.label == crate::corpus::Label::Acceptable) == y[i];
            correct += usize::from(hit);
            per_cluster[p.cluster_id].0 += usize::from(hit);
            per_cluster[p.cluster_id].1 += 1;
        }
        Ok((correct as f64 / idx.len().max(1) as f64, per_cluster))
    };
    model.metrics.train_accuracy = accuracy_over(&train, &model)?.0;
    if !val.is_empty() {
        let (acc, per_cluster) = accuracy_over(&val, &model)?;
        model.metrics.val_accuracy = Some(acc);
        model.metrics.cluster_val_accuracy =
            per_cluster.iter().map(|&(hit, n)| (n > 0).then(|| hit as f64 / n as f64)).collect();
    }
    log::info!(
        "trained {k}-cluster ensemble on {} records (val accuracy {:?})",
        train.len(),
        model.metrics.val_accuracy
    );
    Ok(model)
}

/// `x` must already be unit length.
fn route_and_score(model: &EnsembleModel, x: &[f64]) -> Prediction {
    let mut cluster_id = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, c) in model.centroids.iter().enumerate() {
        let norm = dot_f64(c, c).sqrt();
        let sim = if norm == 0.0 { 0.0 } else { dot_f64(x, c) / norm };
        if sim > best {
            best = sim;
            cluster_id = j;
        }
    }
    let probability_acceptable = model.heads[cluster_id].probability(x);
    Prediction {
        label: label_for(probability_acceptable),
        probability_acceptable,
        cluster_id,
        routing_similarity: best.clamp(-1.0, 1.0),
    }
}

/// Routes to the centroid with the highest cosine (lowest id on ties) and
/// applies that cluster's head to the normalized vector.
pub fn predict_values(model: &EnsembleModel, values: &[f64]) -> Result<Prediction> {
    if values.len() != model.dim {
        return Err(Error::DimMismatch { expected: model.dim, actual: values.len() });
    }
    Ok(route_and_score(model, &normalize_f64(values)?))
}

pub fn predict(model: &EnsembleModel, vector: &EmbeddingVector) -> Result<Prediction> {
    if vector.model_id() != model.model_id {
        return Err(Error::ModelMismatch { expected: model.model_id.clone(), actual: vector.model_id().to_string() });
    }
    predict_values(model, &vector.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::sigmoid;
    use crate::corpus::Label;
    use rand::Rng;

    fn hand_model() -> EnsembleModel {
        EnsembleModel {
            model_id: "m".into(),
            dim: 2,
            centroids: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0]],
            heads: vec![
                LogisticHead { weights: vec![2.0, -1.0], bias: 0.5, kind: HeadKind::Trained },
                LogisticHead { weights: vec![-3.0, 0.25], bias: -0.1, kind: HeadKind::Trained },
                LogisticHead::constant(2, 1.0),
            ],
            train_config: TrainConfig::default(),
            metrics: TrainingSummary {
                train_count: 0,
                val_count: 0,
                cluster_sizes: vec![0; 3],
                cluster_acceptable: vec![0; 3],
                final_losses: vec![0.1, 0.2, 0.3],
                train_accuracy: 1.0 / 3.0,
                val_accuracy: Some(0.1),
                cluster_val_accuracy: vec![None, Some(0.7), None],
                kmeans_iterations: 4,
            },
        }
    }

    #[test]
    fn hand_computed_probability() {
        let m = hand_model();
        let p = predict_values(&m, &[3.0, 4.0]).unwrap();
        // (0.6, 0.8) routes to centroid 1 (cos 0.8 beats 0.6); clusters 1 and 2 tie, lowest id wins.
        assert_eq!(p.cluster_id, 1);
        let z: f64 = -3.0 * 0.6 + 0.25 * 0.8 - 0.1;
        assert!((p.probability_acceptable - 1.0 / (1.0 + (-z).exp())).abs() < 1e-9);
        assert!((p.routing_similarity - 0.8).abs() < 1e-12);
        assert_eq!(p.label, Label::Unacceptable);
    }

    #[test]
    fn self_routing() {
        let m = hand_model();
        assert_eq!(predict_values(&m, &[1.0, 0.0]).unwrap().cluster_id, 0);
        assert_eq!(predict_values(&m, &[0.0, 1.0]).unwrap().cluster_id, 1);
    }

    #[test]
    fn errors() {
        let m = hand_model();
        assert!(matches!(predict_values(&m, &[1.0]), Err(Error::DimMismatch { expected: 2, actual: 1 })));
        assert!(matches!(predict_values(&m, &[0.0, 0.0]), Err(Error::ZeroVector)));
        let v = EmbeddingVector::new(vec![1.0, 0.0], "other").unwrap();
        assert!(matches!(predict(&m, &v), Err(Error::ModelMismatch { .. })));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = hand_model();
        let text = m.to_json().unwrap();
        let back = EnsembleModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["version"], 1);
        assert!(json["weights"].is_string());
    }

    #[test]
    fn version_is_mandatory() {
        let mut json: serde_json::Value = serde_json::from_str(&hand_model().to_json().unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("version");
        assert!(EnsembleModel::from_json(&json.to_string()).is_err());
        json["version"] = 99.into();
        assert!(EnsembleModel::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn split_is_seeded_partition() {
        let (t, v) = split_train_val(100, 0.1, 3).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_train_val(100, 0.1, 3).unwrap(), (t, v));
        assert!(split_train_val(10, 1.0, 0).is_err());
    }

    fn record(id: usize, v: Vec<f32>, label: Label) -> EmbeddingRecord {
        EmbeddingRecord {
            revision_id: format!("r{id}"),
            vector: EmbeddingVector::new(v, "m").unwrap(),
            label,
            provision_number: "1".into(),
        }
    }

    #[test]
    fn too_few_points() {
        let recs: Vec<_> = (0..15).map(|i| record(i, vec![1.0, i as f32], Label::Acceptable)).collect();
        assert!(matches!(train_ensemble(&recs, &TrainConfig::default()), Err(Error::TooFewPoints { needed: 16, got: 15 })));
    }

    #[test]
    fn ensemble_learns_and_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let recs: Vec<_> = (0..200)
            .map(|i| {
                let a: f32 = rng.random_range(-1.0..1.0);
                let b: f32 = rng.random_range(-1.0..1.0);
                record(i, vec![a, b, 0.3], if a > 0.0 { Label::Acceptable } else { Label::Unacceptable })
            })
            .collect();
        let cfg = TrainConfig { k: 3, epochs: 300, seed: 1, ..Default::default() };
        let m = train_ensemble(&recs, &cfg).unwrap();
        assert!(m.metrics.val_accuracy.unwrap() > 0.8);
        assert_eq!(m.metrics.cluster_sizes.iter().sum::<usize>(), m.metrics.train_count);
        let p1 = predict_values(&m, &[0.5, 0.2, 0.3]).unwrap();
        let p2 = predict_values(&m, &[4.0, 1.6, 2.4]).unwrap();
        assert_eq!(p1.cluster_id, p2.cluster_id);
        assert!((p1.probability_acceptable - p2.probability_acceptable).abs() < 1e-12);
        assert_eq!(train_ensemble(&recs, &cfg).unwrap(), m);
    }

    #[test]
    fn single_class_cluster_gets_constant_head() {
        let recs: Vec<_> = (0..20)
            .map(|i| {
                if i < 10 {
                    record(i, vec![1.0, 0.01 * i as f32], Label::Acceptable)
                } else {
                    record(i, vec![0.01 * i as f32, -1.0], if i % 2 == 0 { Label::Acceptable } else { Label::Unacceptable })
                }
            })
            .collect();
        let m = train_ensemble(&recs, &TrainConfig { k: 2, seed: 2, ..Default::default() }).unwrap();
        assert!(m.heads.iter().any(|h| h.kind == HeadKind::Constant));
        let p = predict_values(&m, &[1.0, 0.0]).unwrap();
        assert!((p.probability_acceptable - 0.99).abs() < 1e-12);
        assert!(sigmoid(m.heads[p.cluster_id].bias) > 0.98);
    }
}
