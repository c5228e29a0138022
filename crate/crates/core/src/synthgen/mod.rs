//! Synthetic revision generation: few-shot prompts, reply parsing, the kNN
//! label-agreement filter, and the seeded generation driver.

mod driver;
mod filter;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};

use crate::llm::Sampling;

pub use driver::{
    generate_dataset, paraphrase_revisions, sample_demonstrations, write_dataset, GenerationOutcome,
    ParaphraseOutcome, RequestOutcome, RequestRecord, RunManifest, SYNTHETIC_CONTRACT_ID,
};
pub use filter::{knn_filter, knn_vote, KnnVote, Verdict, DEFAULT_FILTER_K};
pub use parse::{parse_pair, parse_paraphrase, RevisionPair};
pub use prompt::{build_rephrase_prompt, build_synthetic_prompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_demonstrations: usize,
    #[serde(flatten)]
    pub sampling: Sampling,
    pub seed: u64,
    /// Neighbours consulted by the label-agreement filter.
    pub knn_k: usize,
    /// Requests issued per query provision.
    pub generations_per_provision: usize,
    pub max_in_flight: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_demonstrations: 3,
            sampling: Sampling::default(),
            seed: 0,
            knn_k: DEFAULT_FILTER_K,
            generations_per_provision: 1,
            max_in_flight: 4,
        }
    }
}

/// A provision with one acceptable and one unacceptable revision of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub provision_number: String,
    pub provision: String,
    pub acceptable: String,
    pub unacceptable: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub provision_number: String,
    pub acceptable_text: String,
    pub unacceptable_text: String,
    pub prompt_fingerprint: String,
}
