//! Records of the human review loop.

use chrono::{DateTime, Utc};
use revkit_core::classifier::ConfidenceBand;
use revkit_core::corpus::Label;
use revkit_core::optimizer::OptimizationResult;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub revision_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    pub reviewer: String,
    pub decided_at: DateTime<Utc>,
}

impl ReviewDecision {
    pub fn validate(&self) -> Result<()> {
        if self.reviewer.trim().is_empty() {
            return Err(ServiceError::Validation("reviewer is required".into()));
        }
        let has_text = self.final_text.as_deref().is_some_and(|t| !t.trim().is_empty());
        match self.verdict {
            Verdict::Edit if !has_text => Err(ServiceError::Validation("Edit requires a non-empty final_text".into())),
            Verdict::Accept | Verdict::Reject if self.final_text.is_some() => {
                Err(ServiceError::Validation("final_text is only allowed with Edit".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One line of `decisions.jsonl`. Written and synced before anything else
/// a decision touches, so it is the record replayed after a crash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision: ReviewDecision,
    /// Optimizer candidate the verdict refers to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_index: Option<usize>,
    /// Labeled revision appended for this decision.
    pub appended_revision_id: String,
    pub appended_label: Label,
    pub appended_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagStatus {
    Open,
    Optimized,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub revision_id: String,
    pub contract_id: String,
    pub provision_number: String,
    pub probability_acceptable: f64,
    pub confidence_band: ConfidenceBand,
    pub status: FlagStatus,
    pub model_version: u64,
}

/// Ambiguous first, then ascending probability, then id.
pub fn sort_flags(flags: &mut [FlagRecord]) {
    flags.sort_by(|a, b| {
        let rank = |f: &FlagRecord| (f.confidence_band != ConfidenceBand::Ambiguous) as u8;
        rank(a)
            .cmp(&rank(b))
            .then_with(|| a.probability_acceptable.total_cmp(&b.probability_acceptable))
            .then_with(|| a.revision_id.cmp(&b.revision_id))
    });
}

pub fn band_of(probability_acceptable: f64, margin: f64) -> ConfidenceBand {
    if (probability_acceptable - 0.5).abs() < margin {
        ConfidenceBand::Ambiguous
    } else {
        ConfidenceBand::Confident
    }
}

/// Flagged iff predicted unacceptable or inside the ambiguity band.
pub fn is_flagged(probability_acceptable: f64, margin: f64) -> bool {
    probability_acceptable < 0.5 || band_of(probability_acceptable, margin) == ConfidenceBand::Ambiguous
}

/// One line of `optimizations.jsonl`; the latest line per revision wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub model_version: u64,
    pub created_at: DateTime<Utc>,
    pub result: OptimizationResult,
}

/// Contents of `models/CURRENT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPointer {
    pub version: u64,
    /// Length of the decision log when this version was trained.
    pub decisions_at_snapshot: usize,
}
