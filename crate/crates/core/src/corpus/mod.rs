//! Contracts, provisions and the revisions extracted from them.
//!
//! A [`Contract`] is an ordered list of numbered [`Provision`]s. Negotiated
//! contracts carry tracked edits as inline markers (`{++inserted++}`,
//! `{--deleted--}`); [`weak_label`] turns those into labeled [`Revision`]s by
//! comparing each provision against its template.

mod diff;
mod parse;
mod tracked;
mod weak_label;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diff::{diff_words, EditOp, EditScript, EditSpan};
pub(crate) use parse::hex_string;
pub use parse::{is_provision_number, parse_contract, segment_plain_text, Format, Section, Segmentation};
pub use tracked::{detect_tracked_edits, TrackedEdits};
pub use weak_label::{normalize_whitespace, weak_label, weak_label_at, SkipReason, SkippedProvision, WeakLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ContractKind {
    Service,
    Purchase,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: String,
    #[serde(default)]
    pub kind: ContractKind,
    pub provisions: Vec<Provision>,
}

impl Contract {
    pub fn provision(&self, number: &str) -> Option<&Provision> {
        self.provisions.iter().find(|p| p.number == number)
    }

    /// Checks the structural invariants: unique, well-formed numbers and non-empty text.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::MalformedDocument("contract id is empty".into()));
        }
        if self.provisions.is_empty() {
            return Err(Error::MalformedDocument(format!("contract {:?} has no provisions", self.id)));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.provisions {
            p.validate()?;
            if !seen.insert(p.number.as_str()) {
                return Err(Error::MalformedDocument(format!("duplicate provision number {:?}", p.number)));
            }
        }
        Ok(())
    }

    /// Full text rendering used as LLM context.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.provisions {
            out.push_str(&format!("{}. {}\n{}\n\n", p.number, p.title, p.text.trim()));
        }
        out.truncate(out.trim_end().len());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provision {
    pub number: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_text: Option<String>,
    pub text: String,
}

impl Provision {
    pub fn validate(&self) -> Result<()> {
        if !is_provision_number(&self.number) {
            return Err(Error::MalformedDocument(format!("bad provision number {:?}", self.number)));
        }
        if self.text.trim().is_empty() {
            return Err(Error::MalformedDocument(format!("provision {} has empty text", self.number)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Acceptable,
    Unacceptable,
    Unlabeled,
}

impl Label {
    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }

    pub fn as_upper(self) -> &'static str {
        match self {
            Label::Acceptable => "ACCEPTABLE",
            Label::Unacceptable => "UNACCEPTABLE",
            Label::Unlabeled => "UNLABELED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Fallback,
    Negotiated,
    Synthetic,
    Paraphrase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub id: String,
    pub provision_number: String,
    pub contract_id: String,
    pub text: String,
    pub label: Label,
    pub source: Source,
    pub created_at: DateTime<Utc>,
    /// Links the acceptable and unacceptable members of one generated pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
}

impl Revision {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("revision id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidInput(format!("revision {} has empty text", self.id)));
        }
        if matches!(self.source, Source::Synthetic | Source::Paraphrase) && !self.label.is_labeled() {
            return Err(Error::InvalidInput(format!(
                "{:?} revision {} must carry a label",
                self.source, self.id
            )));
        }
        Ok(())
    }
}
