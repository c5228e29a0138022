use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{knn_vote, Verdict};
use super::parse::{parse_pair, parse_paraphrase};
use super::prompt::{build_rephrase_prompt, build_synthetic_prompt};
use super::{Demonstration, GenerationConfig, SyntheticPair};
use crate::corpus::{Label, Provision, Revision, Source};
use crate::embedding::{embed_texts, Embedder, EmbeddingVector, VectorStore};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::llm::{ChatModel, ChatRequest, Sampling};
use crate::util::{bounded_map, fingerprint};

pub const SYNTHETIC_CONTRACT_ID: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RequestOutcome {
    Parsed { acceptable: Verdict, unacceptable: Verdict },
    Malformed { detail: String },
    Failed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub index: usize,
    pub provision_number: String,
    pub seed: u64,
    pub prompt_fingerprint: String,
    pub demo_provisions: Vec<String>,
    pub outcome: RequestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: GenerationConfig,
    pub llm_model: String,
    pub embedding_model: String,
    pub created_at: DateTime<Utc>,
    pub kept_count: usize,
    pub discarded_count: usize,
    pub malformed_count: usize,
    pub failed_count: usize,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub kept: Vec<Revision>,
    /// Embedding of each kept revision, parallel to `kept`.
    pub kept_vectors: Vec<EmbeddingVector>,
    pub pairs: Vec<SyntheticPair>,
    /// Individual revisions rejected by the kNN filter.
    pub discarded_count: usize,
    pub malformed_count: usize,
    pub failed_count: usize,
    pub manifest: RunManifest,
}

/// Picks `n` distinct demonstrations. When any demonstration belongs to
/// `query_number`, one of those is always included.
pub fn sample_demonstrations<R: Rng>(demos: &[Demonstration], query_number: &str, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidInput("n_demonstrations must be at least 1".into()));
    }
    if demos.len() < n {
        return Err(Error::InsufficientDemonstrations { needed: n, available: demos.len() });
    }
    let family: Vec<usize> = (0..demos.len()).filter(|&i| demos[i].provision_number == query_number).collect();
    let mut chosen = Vec::with_capacity(n);
    if !family.is_empty() {
        chosen.push(family[rng.random_range(0..family.len())]);
    }
    let rest: Vec<usize> = (0..demos.len()).filter(|i| !chosen.contains(i)).collect();
    let need = n - chosen.len();
    chosen.extend(index::sample(rng, rest.len(), need).into_iter().map(|j| rest[j]));
    chosen.shuffle(rng);
    Ok(chosen)
}

fn sub_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

struct Request<'a> {
    provision: &'a Provision,
    seed: u64,
    prompt: String,
    demo_provisions: Vec<String>,
}

/// Runs the full generate, parse, embed and filter loop. Per-request
/// failures are tallied; an unreachable provider aborts the run.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    llm: &dyn ChatModel,
    embedder: &dyn Embedder,
    provisions: &[Provision],
    demos_source: &[Demonstration],
    config: &GenerationConfig,
    real_store: &VectorStore,
    created_at: DateTime<Utc>,
) -> Result<GenerationOutcome> {
    let mut requests = Vec::new();
    for provision in provisions {
        for _ in 0..config.generations_per_provision {
            let seed = sub_seed(config.seed, requests.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = sample_demonstrations(demos_source, &provision.number, config.n_demonstrations, &mut rng)?;
            let demos: Vec<Demonstration> = picked.iter().map(|&i| demos_source[i].clone()).collect();
            requests.push(Request {
                provision,
                seed,
                prompt: build_synthetic_prompt(&demos, provision)?,
                demo_provisions: demos.into_iter().map(|d| d.provision_number).collect(),
            });
        }
    }

    let aborted = AtomicBool::new(false);
    let replies = bounded_map(&requests, config.max_in_flight, |_, req| {
        if aborted.load(Ordering::SeqCst) {
            return Err(Error::ProviderUnavailable("run aborted".into()));
        }
        let r = llm.complete(&ChatRequest::user(req.prompt.clone(), config.sampling, Some(req.seed)));
        if matches!(r, Err(Error::ProviderUnavailable(_))) {
            aborted.store(true, Ordering::SeqCst);
        }
        r
    });
    if let Some(pos) = replies.iter().position(|r| matches!(r, Err(Error::ProviderUnavailable(_)))) {
        let Err(e) = replies.into_iter().nth(pos).unwrap() else { unreachable!() };
        return Err(e);
    }

    let mut records: Vec<RequestRecord> = Vec::with_capacity(requests.len());
    let mut pairs = Vec::new();
    let mut pair_request = Vec::new();
    let (mut malformed_count, mut failed_count) = (0, 0);
    for (i, (req, reply)) in requests.iter().zip(replies).enumerate() {
        let fp = fingerprint(&req.prompt);
        let outcome = match reply.and_then(|text| parse_pair(&text)) {
            Ok(pair) => {
                pairs.push(SyntheticPair {
                    provision_number: req.provision.number.clone(),
                    acceptable_text: pair.acceptable,
                    unacceptable_text: pair.unacceptable,
                    prompt_fingerprint: fp.clone(),
                });
                pair_request.push(i);
                // Verdicts are filled in once the pair is embedded.
                RequestOutcome::Parsed { acceptable: Verdict::Discard, unacceptable: Verdict::Discard }
            }
            Err(e @ Error::MalformedLlmOutput(_)) => {
                malformed_count += 1;
                RequestOutcome::Malformed { detail: e.to_string() }
            }
            Err(e) => {
                log::warn!("generation request {i} failed: {e}");
                failed_count += 1;
                RequestOutcome::Failed { detail: e.to_string() }
            }
        };
        records.push(RequestRecord {
            index: i,
            provision_number: req.provision.number.clone(),
            seed: req.seed,
            prompt_fingerprint: fp,
            demo_provisions: req.demo_provisions.clone(),
            outcome,
        });
    }

    let mut kept = Vec::new();
    let mut kept_vectors = Vec::new();
    let mut discarded_count = 0;
    if !pairs.is_empty() {
        let texts: Vec<String> =
            pairs.iter().flat_map(|p| [p.acceptable_text.clone(), p.unacceptable_text.clone()]).collect();
        let mut vectors = embed_texts(embedder, &texts)?.into_iter();
        for (pair, &req_index) in pairs.iter().zip(&pair_request) {
            let pair_id = format!("syn-{req_index:06}-{}", &pair.prompt_fingerprint[..8]);
            let mut verdicts = [Verdict::Discard; 2];
            for (slot, (label, text, suffix)) in [
                (Label::Acceptable, &pair.acceptable_text, "a"),
                (Label::Unacceptable, &pair.unacceptable_text, "u"),
            ]
            .into_iter()
            .enumerate()
            {
                let vector = vectors.next().expect("two vectors per pair");
                verdicts[slot] = knn_vote(label, &vector, real_store, config.knn_k)?.verdict;
                if verdicts[slot] == Verdict::Keep {
                    kept.push(Revision {
                        id: format!("{pair_id}:{suffix}"),
                        provision_number: pair.provision_number.clone(),
                        contract_id: SYNTHETIC_CONTRACT_ID.into(),
                        text: text.clone(),
                        label,
                        source: Source::Synthetic,
                        created_at,
                        pair_id: Some(pair_id.clone()),
                    });
                    kept_vectors.push(vector);
                } else {
                    discarded_count += 1;
                }
            }
            records[req_index].outcome = RequestOutcome::Parsed { acceptable: verdicts[0], unacceptable: verdicts[1] };
        }
    }

    let manifest = RunManifest {
        config: config.clone(),
        llm_model: llm.model_id().to_string(),
        embedding_model: embedder.model_id().to_string(),
        created_at,
        kept_count: kept.len(),
        discarded_count,
        malformed_count,
        failed_count,
        requests: records,
    };
    Ok(GenerationOutcome { kept, kept_vectors, pairs, discarded_count, malformed_count, failed_count, manifest })
}

/// Writes `revisions.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, outcome: &GenerationOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    jsonl::write_jsonl(&dir.join("revisions.jsonl"), &outcome.kept)?;
    let manifest = serde_json::to_vec_pretty(&outcome.manifest)?;
    jsonl::write_atomic(&dir.join("manifest.json"), &manifest)
}

#[derive(Debug, Clone)]
pub struct ParaphraseOutcome {
    /// One paraphrase per successfully rephrased input, linked back through `pair_id`.
    pub revisions: Vec<Revision>,
    pub malformed_count: usize,
    pub failed_count: usize,
}

/// Rephrases each revision, keeping label, provision and contract.
pub fn paraphrase_revisions(
    llm: &dyn ChatModel,
    revisions: &[Revision],
    sampling: Sampling,
    seed: u64,
    max_in_flight: usize,
    created_at: DateTime<Utc>,
) -> Result<ParaphraseOutcome> {
    let replies = bounded_map(revisions, max_in_flight, |i, r| {
        llm.complete(&ChatRequest::user(build_rephrase_prompt(r), sampling, Some(sub_seed(seed, i))))
    });
    let mut out = ParaphraseOutcome { revisions: Vec::new(), malformed_count: 0, failed_count: 0 };
    for (r, reply) in revisions.iter().zip(replies) {
        match reply.and_then(|t| parse_paraphrase(&t)) {
            Ok(text) => out.revisions.push(Revision {
                id: format!("{}:para", r.id),
                text,
                source: Source::Paraphrase,
                created_at,
                pair_id: Some(r.id.clone()),
                ..r.clone()
            }),
            Err(e @ Error::ProviderUnavailable(_)) => return Err(e),
            Err(Error::MalformedLlmOutput(_)) => out.malformed_count += 1,
            Err(e) => {
                log::warn!("paraphrase of {} failed: {e}", r.id);
                out.failed_count += 1;
            }
        }
    }
    Ok(out)
}
