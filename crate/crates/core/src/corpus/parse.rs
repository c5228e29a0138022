use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Contract, ContractKind, Provision};
use crate::error::{Error, Result};

static HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[ \t]*(\d+(?:\.\d+)*)[.)][ \t]+(\S.*?)\s*$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(?:\.\d+)*$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    PlainText,
    Structured,
}

pub fn is_provision_number(s: &str) -> bool {
    NUMBER.is_match(s)
}

/// One numbered section of a plain-text contract, borrowed from the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section<'a> {
    pub number: String,
    pub title: String,
    /// Heading line(s) including their line terminators. Parent headings
    /// with no body of their own are folded into the next section's heading.
    pub heading: &'a str,
    pub body: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation<'a> {
    pub preamble: &'a str,
    pub sections: Vec<Section<'a>>,
}

impl Segmentation<'_> {
    /// Reassembles the source text. Always equal to the segmented input.
    pub fn reassemble(&self) -> String {
        let mut out = String::from(self.preamble);
        for s in &self.sections {
            out.push_str(s.heading);
            out.push_str(s.body);
        }
        out
    }
}

/// Splits plain text into numbered sections without losing a byte.
pub fn segment_plain_text(raw: &str) -> Result<Segmentation<'_>> {
    // (line start, line end, number, title) for every heading line
    let mut headings = Vec::new();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if let Some(caps) = HEADING.captures(line.trim_end_matches(['\n', '\r'])) {
            headings.push((offset, offset + line.len(), caps[1].to_string(), caps[2].to_string()));
        }
        offset += line.len();
    }
    if headings.is_empty() {
        return Err(Error::MalformedDocument("no numbered provision headings found".into()));
    }

    let preamble = &raw[..headings[0].0];
    let mut sections = Vec::new();
    let mut pending_start: Option<usize> = None;
    for (i, (start, line_end, number, title)) in headings.iter().enumerate() {
        let body_end = headings.get(i + 1).map_or(raw.len(), |h| h.0);
        let body = &raw[*line_end..body_end];
        let heading_start = pending_start.unwrap_or(*start);
        if body.trim().is_empty() && i + 1 < headings.len() {
            pending_start.get_or_insert(*start);
            continue;
        }
        pending_start = None;
        sections.push(Section {
            number: number.clone(),
            title: title.clone(),
            heading: &raw[heading_start..*line_end],
            body,
        });
    }

    let mut seen = HashSet::new();
    for s in &sections {
        if s.body.trim().is_empty() {
            return Err(Error::MalformedDocument(format!("provision {} has no body", s.number)));
        }
        if !seen.insert(s.number.as_str()) {
            return Err(Error::MalformedDocument(format!("duplicate provision number {:?}", s.number)));
        }
    }
    Ok(Segmentation { preamble, sections })
}

pub fn parse_contract(raw: &str, format: Format) -> Result<Contract> {
    if raw.trim().is_empty() {
        return Err(Error::MalformedDocument("document is empty".into()));
    }
    match format {
        Format::Structured => {
            let contract: Contract = serde_json::from_str(raw)
                .map_err(|e| Error::MalformedDocument(format!("invalid structured contract: {e}")))?;
            contract.validate()?;
            Ok(contract)
        }
        Format::PlainText => {
            let seg = segment_plain_text(raw)?;
            let provisions = seg
                .sections
                .iter()
                .map(|s| Provision {
                    number: s.number.clone(),
                    title: s.title.clone(),
                    template_text: None,
                    text: s.body.trim().to_string(),
                })
                .collect();
            let digest = Sha256::digest(raw.as_bytes());
            let contract = Contract {
                id: format!("c-{}", &hex_string(&digest)[..16]),
                kind: infer_kind(seg.preamble),
                provisions,
            };
            contract.validate()?;
            Ok(contract)
        }
    }
}

fn infer_kind(preamble: &str) -> ContractKind {
    let lower = preamble.to_lowercase();
    if lower.contains("purchase") {
        ContractKind::Purchase
    } else if lower.contains("service") {
        ContractKind::Service
    } else {
        ContractKind::Other
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_heading() {
        let c = parse_contract("1. Term\nThis agreement runs for one year.\n", Format::PlainText).unwrap();
        assert_eq!(c.provisions.len(), 1);
        assert_eq!(c.provisions[0].number, "1");
        assert_eq!(c.provisions[0].title, "Term");
        assert_eq!(c.provisions[0].text, "This agreement runs for one year.");
    }

    #[test]
    fn no_heading_is_malformed() {
        let err = parse_contract("Just some text\nwithout numbering.", Format::PlainText).unwrap_err();
        assert!(matches!(err, Error::MalformedDocument(_)));
    }

    #[test]
    fn duplicate_numbers_are_malformed() {
        let raw = "1. A\nx\n1. B\ny\n";
        assert!(matches!(parse_contract(raw, Format::PlainText), Err(Error::MalformedDocument(_))));
    }

    #[test]
    fn parenthesis_headings_and_indent() {
        let raw = "Preamble line\n  2) Payment\nPay promptly.\n  3.1) Late fees\nNone.\n";
        let seg = segment_plain_text(raw).unwrap();
        assert_eq!(seg.preamble, "Preamble line\n");
        let numbers: Vec<_> = seg.sections.iter().map(|s| s.number.as_str()).collect();
        assert_eq!(numbers, ["2", "3.1"]);
        assert_eq!(seg.reassemble(), raw);
    }

    #[test]
    fn parent_heading_folds_into_child() {
        let raw = "7. Payment\n7.1. Invoices\nMonthly.\n7.2. Disputes\nIn writing.\n";
        let seg = segment_plain_text(raw).unwrap();
        assert_eq!(seg.sections.len(), 2);
        assert_eq!(seg.sections[0].heading, "7. Payment\n7.1. Invoices\n");
        assert_eq!(seg.reassemble(), raw);
    }

    #[test]
    fn structured_round_trip() {
        let raw = r#"{"id":"k1","kind":"Service","provisions":[
            {"number":"1","title":"Term","template_text":"One year.","text":"Two years."}]}"#;
        let c = parse_contract(raw, Format::Structured).unwrap();
        assert_eq!(c.kind, ContractKind::Service);
        assert_eq!(c.provisions[0].template_text.as_deref(), Some("One year."));
    }

    #[test]
    fn structured_rejects_bad_number() {
        let raw = r#"{"id":"k1","provisions":[{"number":"A.1","title":"T","text":"x"}]}"#;
        assert!(matches!(parse_contract(raw, Format::Structured), Err(Error::MalformedDocument(_))));
    }
}
