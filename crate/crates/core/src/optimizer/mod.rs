//! Retrieval-augmented rewriting of unacceptable revisions with best-of-N
//! selection by classifier reward.

mod demos;
mod prompt;
mod run;

use serde::{Deserialize, Serialize};

use crate::llm::Sampling;
use crate::retrieval::DEFAULT_DEPENDENCY_THRESHOLD;

pub use demos::{select_demonstrations, DemoPool, DemoTriple};
pub use prompt::{build_optimization_prompt, parse_candidate, OptimizationDemo};
pub use run::{
    batch_optimize, optimize, BatchFailure, BatchReport, ClassifierReward, OptimizationQuery, OptimizationResult,
    RewardModel, ScoredCandidate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationConfig {
    pub n_demonstrations: usize,
    pub best_of_n: usize,
    #[serde(flatten)]
    pub sampling: Sampling,
    pub include_related_clauses: bool,
    pub related_threshold: f64,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            n_demonstrations: 5,
            best_of_n: 4,
            sampling: Sampling::default(),
            include_related_clauses: true,
            related_threshold: DEFAULT_DEPENDENCY_THRESHOLD,
            seed: 0,
            max_in_flight: 4,
        }
    }
}
