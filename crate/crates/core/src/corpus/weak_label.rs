use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{detect_tracked_edits, Contract, Label, Revision, Source};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    NotInTemplate,
    UnbalancedMarkers(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedProvision {
    pub number: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabeling {
    pub revisions: Vec<Revision>,
    pub skipped: Vec<SkippedProvision>,
}

/// Collapses whitespace runs to a single space and trims. Case is preserved.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn weak_label(contract: &Contract, template: &Contract) -> WeakLabeling {
    weak_label_at(contract, template, Utc::now())
}

/// Labels negotiated provisions against the template: tracked edits mark a
/// revision unacceptable, an unedited change marks it acceptable, and an
/// unchanged provision yields nothing.
pub fn weak_label_at(contract: &Contract, template: &Contract, created_at: DateTime<Utc>) -> WeakLabeling {
    let mut revisions = Vec::new();
    let mut skipped = Vec::new();

    for provision in &contract.provisions {
        let Some(reference) = template.provision(&provision.number) else {
            skipped.push(SkippedProvision { number: provision.number.clone(), reason: SkipReason::NotInTemplate });
            continue;
        };
        let template_text = reference.template_text.as_deref().unwrap_or(&reference.text);

        let edits = match detect_tracked_edits(&provision.text) {
            Ok(edits) => edits,
            Err(e) => {
                skipped.push(SkippedProvision {
                    number: provision.number.clone(),
                    reason: SkipReason::UnbalancedMarkers(e.to_string()),
                });
                continue;
            }
        };

        let label = if edits.has_edits {
            Label::Unacceptable
        } else if normalize_whitespace(&edits.accepted_text) != normalize_whitespace(template_text) {
            Label::Acceptable
        } else {
            continue;
        };

        let text = edits.accepted_text.trim().to_string();
        if text.is_empty() {
            // A provision deleted wholesale has no revision text to learn from.
            continue;
        }
        revisions.push(Revision {
            id: format!("{}:{}", contract.id, provision.number),
            provision_number: provision.number.clone(),
            contract_id: contract.id.clone(),
            text,
            label,
            source: Source::Negotiated,
            created_at,
            pair_id: None,
        });
    }

    WeakLabeling { revisions, skipped }
}
