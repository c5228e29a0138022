use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embedding::{EmbeddingRecord, EmbeddingVector, Metric, VectorStore};
use crate::error::{Error, Result};
use crate::llm::{ChatModel, ChatRequest, Sampling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotResult {
    pub label: Label,
    pub justification: String,
}

/// Demonstrations are rendered in the given order.
pub fn build_zero_shot_prompt(demos: &[(String, Label)], query: &str) -> Result<String> {
    if demos.is_empty() {
        return Err(Error::InvalidInput("zero-shot prompt needs at least one demonstration".into()));
    }
    let mut out = String::from(
        "Below are examples of contract clause revisions labeled as either acceptable or unacceptable. Analyze the \
         patterns in these examples and determine whether the given query revision should be classified as \
         ACCEPTABLE or UNACCEPTABLE. Provide a brief justification for your classification.\n\n",
    );
    for (i, (text, label)) in demos.iter().enumerate() {
        if !label.is_labeled() {
            return Err(Error::InvalidInput("demonstrations must be labeled".into()));
        }
        out.push_str(&format!("Demonstration {}\nRevision: {}\nLabel: {}\n\n", i + 1, text.trim(), label.as_upper()));
    }
    out.push_str(&format!(
        "Query Revision: {}\n\nOutput:\nLabel: <ACCEPTABLE or UNACCEPTABLE>\nJustification: <Explain the decision>",
        query.trim()
    ));
    Ok(out)
}

static LABEL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s*_#>-]*label[*_]*\s*:[\s*_]*(unacceptable|acceptable)\b[*_]*(.*)$").unwrap()
});
static JUSTIFICATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)^[\s*_#>-]*justification[*_]*\s*:[*_]*(.*)").unwrap());

/// Reads the first `Label:` line and the justification, either from a
/// `Justification:` section or from whatever trails the label.
pub fn parse_zero_shot(reply: &str) -> Result<ZeroShotResult> {
    let caps = LABEL_LINE.captures(reply).ok_or_else(|| Error::MalformedLlmOutput("no Label line".into()))?;
    let label = if caps[1].eq_ignore_ascii_case("acceptable") { Label::Acceptable } else { Label::Unacceptable };
    let after = &reply[caps.get(0).unwrap().end()..];
    let justification = after
        .lines()
        .find_map(|l| JUSTIFICATION.captures(l).map(|c| c[1].to_string()))
        .map(|first| {
            // Keep any continuation lines of the justification.
            let start = after.find(&first).unwrap_or(0);
            after[start..].trim().to_string()
        })
        .unwrap_or_else(|| {
            caps[2].trim().trim_start_matches(|c: char| matches!(c, '-' | '–' | '—' | ':' | ',' | '.') || c.is_whitespace()).trim().to_string()
        });
    Ok(ZeroShotResult { label, justification })
}

fn nearest_texts(
    store: &VectorStore,
    texts: &HashMap<String, String>,
    query: &EmbeddingVector,
    exclude_id: Option<&str>,
    label: Label,
    k: usize,
) -> Result<Vec<String>> {
    let keep = |r: &EmbeddingRecord| r.label == label && Some(r.revision_id.as_str()) != exclude_id;
    let available = store.records().iter().filter(|r| keep(r)).count();
    if available < k {
        return Err(Error::InsufficientDemonstrations { needed: k, available });
    }
    store
        .query(query, Metric::Cosine, k, Some(&keep))?
        .iter()
        .map(|h| {
            texts
                .get(&h.record.revision_id)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("no text for revision {}", h.record.revision_id)))
        })
        .collect()
}

/// Retrieves the `k_demos` most similar acceptable and unacceptable
/// revisions, interleaves them as demonstrations and asks the model.
#[allow(clippy::too_many_arguments)]
pub fn zero_shot_classify(
    llm: &dyn ChatModel,
    store: &VectorStore,
    texts: &HashMap<String, String>,
    revision_text: &str,
    revision_vector: &EmbeddingVector,
    exclude_id: Option<&str>,
    k_demos: usize,
    sampling: Sampling,
    seed: Option<u64>,
) -> Result<ZeroShotResult> {
    if k_demos == 0 {
        return Err(Error::InvalidInput("k_demos must be at least 1".into()));
    }
    let good = nearest_texts(store, texts, revision_vector, exclude_id, Label::Acceptable, k_demos)?;
    let bad = nearest_texts(store, texts, revision_vector, exclude_id, Label::Unacceptable, k_demos)?;
    let demos: Vec<(String, Label)> =
        good.into_iter().zip(bad).flat_map(|(g, b)| [(g, Label::Acceptable), (b, Label::Unacceptable)]).collect();
    let prompt = build_zero_shot_prompt(&demos, revision_text)?;
    parse_zero_shot(&llm.complete(&ChatRequest::user(prompt, sampling, seed))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::llm::ScriptedChat;

    #[test]
    fn parses_canonical_reply() {
        let r = parse_zero_shot("Label: ACCEPTABLE\nJustification: mirrors precedent").unwrap();
        assert_eq!(r, ZeroShotResult { label: Label::Acceptable, justification: "mirrors precedent".into() });
    }

    #[test]
    fn parses_lowercase_with_dash() {
        let r = parse_zero_shot("label: unacceptable — shifts all liability").unwrap();
        assert_eq!(r.label, Label::Unacceptable);
        assert_eq!(r.justification, "shifts all liability");
    }

    #[test]
    fn parses_markdown_and_preamble() {
        let r = parse_zero_shot("Sure.\n**Label:** UNACCEPTABLE\n**Justification:** caps liability at zero.\nIt also waives notice.").unwrap();
        assert_eq!(r.label, Label::Unacceptable);
        assert_eq!(r.justification, "caps liability at zero.\nIt also waives notice.");
    }

    #[test]
    fn missing_label_is_malformed() {
        assert!(matches!(parse_zero_shot("I think it is fine."), Err(Error::MalformedLlmOutput(_))));
        assert!(parse_zero_shot("Label: maybe").is_err());
    }

    #[test]
    fn prompt_layout() {
        let p = build_zero_shot_prompt(
            &[("a text".into(), Label::Acceptable), ("u text".into(), Label::Unacceptable)],
            "query text",
        )
        .unwrap();
        assert!(p.starts_with("Below are examples of contract clause revisions labeled as either acceptable or unacceptable."));
        assert!(p.contains("Demonstration 1\nRevision: a text\nLabel: ACCEPTABLE\n\nDemonstration 2\nRevision: u text\nLabel: UNACCEPTABLE\n\n"));
        assert!(p.contains("Query Revision: query text\n"));
    }

    #[test]
    fn classify_interleaves_nearest_demos() {
        let e = HashingEmbedder::default();
        let entries = [
            ("a1", "supplier pays within thirty days", Label::Acceptable),
            ("a2", "buyer receives notice before termination", Label::Acceptable),
            ("u1", "supplier may withhold payment forever", Label::Unacceptable),
            ("u2", "buyer waives every claim", Label::Unacceptable),
        ];
        let mut texts = HashMap::new();
        let mut recs = Vec::new();
        for (id, text, label) in entries {
            texts.insert(id.to_string(), text.to_string());
            recs.push(EmbeddingRecord { revision_id: id.into(), vector: e.embed_one(text), label, provision_number: "1".into() });
        }
        let store = VectorStore::from_records(recs).unwrap();
        let llm = ScriptedChat::new(["Label: UNACCEPTABLE\nJustification: withholds payment"]);
        let q = "supplier may withhold payment";
        let r = zero_shot_classify(&llm, &store, &texts, q, &e.embed_one(q), None, 1, Sampling::default(), Some(1)).unwrap();
        assert_eq!(r.label, Label::Unacceptable);
        let prompt = llm.calls()[0].prompt().to_string();
        assert!(prompt.contains("Revision: supplier pays within thirty days\nLabel: ACCEPTABLE"));
        assert!(prompt.contains("Demonstration 2\nRevision: supplier may withhold payment forever\nLabel: UNACCEPTABLE"));
        let err = zero_shot_classify(&llm, &store, &texts, q, &e.embed_one(q), None, 3, Sampling::default(), None).unwrap_err();
        assert!(matches!(err, Error::InsufficientDemonstrations { needed: 3, available: 2 }));
    }
}
