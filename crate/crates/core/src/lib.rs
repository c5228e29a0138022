//! Contract revision engine: corpus parsing and weak labeling, embeddings
//! and exact vector search, precedent retrieval, synthetic data generation,
//! the clustered acceptability classifier, metrics, and reward-selected
//! rewriting.

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod optimizer;
pub mod retrieval;
pub mod synthgen;
pub mod util;

pub use error::{Error, Result};
