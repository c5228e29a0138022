use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::corpus::{Contract, Provision};
use crate::error::{Error, Result};
use crate::llm::{ChatModel, ChatRequest, Sampling};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseEvidence {
    pub keywords: Vec<String>,
    pub key_phrases: Vec<String>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseDependency {
    /// The clause under analysis.
    pub source_number: String,
    /// The related clause elsewhere in the contract.
    pub target_number: String,
    pub score: f64,
    pub evidence: ClauseEvidence,
    /// Included because the source explicitly cites the target, whatever its score.
    pub explicit_reference: bool,
}

pub fn build_dependency_prompt(contract: &Contract, target: &Provision) -> String {
    format!(
        "Given the contract text below, analyze the specified clause to extract:\n\
         (1) The key terms and phrases that summarize its content.\n\
         (2) Any explicit or implicit references to other clauses within the same contract \
         (e.g. \u{201c}as described in Section 5\u{201d}, \u{201c}subject to Clause 10\u{201d}).\n\
         Return the output in JSON format with the keys \"keywords\", \"key_phrases\", and \"references\". \
         Do not modify the text of the clause.\n\n\
         Full Contract:\n{}\n\n\
         Target Clause:\n{}. {}\n{}\n\n\
         Output:\n{{\n  \"keywords\": [...],\n  \"key_phrases\": [...],\n  \"references\": [...]\n}}",
        contract.render(),
        target.number,
        target.title,
        target.text.trim()
    )
}

/// First brace-balanced substring that parses as a JSON object. Braces
/// inside JSON strings are ignored while balancing.
pub fn extract_json_object(text: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(open) = text[start..].find('{').map(|i| start + i) {
        let (mut depth, mut in_string, mut escaped) = (0usize, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&text[open..=i]) {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        start = open + 1;
    }
    None
}

fn parse_evidence(reply: &str) -> Result<ClauseEvidence> {
    let map = extract_json_object(reply).ok_or_else(|| Error::MalformedLlmOutput("no JSON object in reply".into()))?;
    let field = |key: &str| -> Result<Vec<String>> {
        let value = map.get(key).ok_or_else(|| Error::MalformedLlmOutput(format!("missing key {key:?}")))?;
        serde_json::from_value(value.clone())
            .map_err(|_| Error::MalformedLlmOutput(format!("{key:?} is not a list of strings")))
    };
    Ok(ClauseEvidence { keywords: field("keywords")?, key_phrases: field("key_phrases")?, references: field("references")? })
}

/// Asks the LLM for keywords, key phrases and cross-references of `target`.
/// A malformed reply is retried once before surfacing `MalformedLlmOutput`.
pub fn extract_clause_dependencies(
    llm: &dyn ChatModel,
    contract: &Contract,
    target: &Provision,
    sampling: Sampling,
    seed: Option<u64>,
) -> Result<ClauseEvidence> {
    let request = ChatRequest::user(build_dependency_prompt(contract, target), sampling, seed);
    let first = parse_evidence(&llm.complete(&request)?);
    match first {
        Ok(evidence) => Ok(evidence),
        Err(e) => {
            log::debug!("dependency extraction for {} failed ({e}), retrying", target.number);
            parse_evidence(&llm.complete(&request)?)
        }
    }
}

static REFERENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\b(?:sections?|clauses?|articles?|paragraphs?|provisions?)\s*|§+\s*)(\d+(?:\.\d+)*)").unwrap()
});
static BARE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+(?:\.\d+)*)\s*$").unwrap());

/// Provision number cited by a reference string such as "Section 5" or "§ 7.1".
pub fn resolve_reference(reference: &str) -> Option<String> {
    REFERENCE
        .captures(reference)
        .or_else(|| BARE_NUMBER.captures(reference))
        .map(|c| c[1].trim_end_matches('.').to_string())
}

/// Scores `target` against every other provision and keeps those at or
/// above `threshold`, plus any provision the evidence explicitly cites.
pub fn related_clauses(
    scorer: &dyn Scorer,
    contract: &Contract,
    target: &Provision,
    threshold: f64,
    evidence: Option<&ClauseEvidence>,
) -> Result<Vec<ClauseDependency>> {
    let others: Vec<&Provision> = contract.provisions.iter().filter(|p| p.number != target.number).collect();
    if others.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = others.iter().map(|p| p.text.clone()).collect();
    let scores = scorer.score(&target.text, &texts)?;
    super::scorer::validate_scores(&scores, texts.len())?;

    let cited: Vec<(String, &String)> = evidence
        .map(|e| e.references.iter().filter_map(|r| resolve_reference(r).map(|n| (n, r))).collect())
        .unwrap_or_default();

    let mut out: Vec<ClauseDependency> = others
        .iter()
        .zip(scores)
        .filter_map(|(p, score)| {
            let refs: Vec<String> = cited.iter().filter(|(n, _)| *n == p.number).map(|(_, r)| (*r).clone()).collect();
            let explicit = !refs.is_empty();
            (score >= threshold || explicit).then(|| ClauseDependency {
                source_number: target.number.clone(),
                target_number: p.number.clone(),
                score,
                evidence: ClauseEvidence {
                    keywords: evidence.map(|e| e.keywords.clone()).unwrap_or_default(),
                    key_phrases: evidence.map(|e| e.key_phrases.clone()).unwrap_or_default(),
                    references: refs,
                },
                explicit_reference: explicit,
            })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.target_number.cmp(&b.target_number)));
    Ok(out)
}
