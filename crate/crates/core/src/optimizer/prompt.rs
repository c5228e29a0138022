use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationDemo {
    pub provision: String,
    pub unacceptable: String,
    pub acceptable: String,
}

const INSTRUCTION: &str = "Use the following examples of provisions and their revisions to learn how to transform \
unacceptable revisions into acceptable ones. Then, provide revised versions for the given query unacceptable revision.";
const RELATED_INSTRUCTION: &str = " You are also provided with clauses from the same contract that may be \
contextually relevant to the query. Incorporate their meaning and constraints when rewriting.";

/// Renders the rewriting prompt. With no related clauses, both the related
/// block and the sentences that introduce it are left out.
pub fn build_optimization_prompt(demos: &[OptimizationDemo], related_clauses: &[String], query_text: &str) -> Result<String> {
    if demos.is_empty() {
        return Err(Error::InvalidInput("optimization prompt needs at least one demonstration".into()));
    }
    let mut out = String::from(INSTRUCTION);
    if !related_clauses.is_empty() {
        out.push_str(RELATED_INSTRUCTION);
    }
    out.push_str("\n\n");
    for (i, d) in demos.iter().enumerate() {
        out.push_str(&format!(
            "Demonstration {}\nProvision: {}\nUnacceptable revision: {}\nAcceptable revision: {}\n\n",
            i + 1,
            d.provision.trim(),
            d.unacceptable.trim(),
            d.acceptable.trim()
        ));
    }
    if !related_clauses.is_empty() {
        out.push_str("Related Clauses (from current contract):\n");
        for c in related_clauses {
            out.push_str(&format!("Related clause: {}\n", c.trim()));
        }
        out.push('\n');
    }
    out.push_str(&format!("Query Unacceptable Revision: {}\nOptimized Unacceptable Version:", query_text.trim()));
    Ok(out)
}

static CUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*_#]*(?:optimized(?:\s+unacceptable)?\s+version|optimized\s+revision|acceptable\s+revision|revised\s+version)[*_]*\s*:[*_]*").unwrap()
});
static ECHO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s*_#]*(?:demonstration\s+\d+|query\s+unacceptable\s+revision\s*:)").unwrap());

/// Candidate text from a rewriting reply: any leading cue label is removed
/// and echoed prompt material after the answer is cut.
pub fn parse_candidate(reply: &str) -> Result<String> {
    let body = CUE.find(reply).map_or(reply, |m| &reply[m.end()..]);
    let body = ECHO.find(body).map_or(body, |m| &body[..m.start()]);
    let text = body.trim().trim_matches(|c: char| c == '*' || c == '"' || c.is_whitespace()).to_string();
    if text.is_empty() {
        return Err(Error::MalformedLlmOutput("empty rewrite".into()));
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(i: usize) -> OptimizationDemo {
        OptimizationDemo { provision: format!("P{i}"), unacceptable: format!("U{i}"), acceptable: format!("A{i}") }
    }

    #[test]
    fn template_order() {
        let p = build_optimization_prompt(&[demo(1), demo(2)], &["Clause 9 text".into()], "query").unwrap();
        let marks = [
            "Use the following examples",
            "You are also provided with clauses from the same contract",
            "Demonstration 1\nProvision: P1\nUnacceptable revision: U1\nAcceptable revision: A1\n\n",
            "Demonstration 2\nProvision: P2",
            "Related Clauses (from current contract):\nRelated clause: Clause 9 text\n",
            "Query Unacceptable Revision: query\n",
        ];
        let pos: Vec<usize> = marks.iter().map(|m| p.find(m).unwrap_or_else(|| panic!("missing {m}"))).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(p.ends_with("Optimized Unacceptable Version:"));
    }

    #[test]
    fn related_block_omitted() {
        let p = build_optimization_prompt(&[demo(1)], &[], "query").unwrap();
        assert!(!p.contains("Related"));
        assert!(!p.contains("same contract"));
        assert_eq!(p, build_optimization_prompt(&[demo(1)], &[], "query").unwrap());
    }

    #[test]
    fn no_demos() {
        assert!(build_optimization_prompt(&[], &[], "q").is_err());
    }

    #[test]
    fn candidate_parsing() {
        assert_eq!(parse_candidate("Supplier pays in 30 days.").unwrap(), "Supplier pays in 30 days.");
        assert_eq!(parse_candidate("**Optimized Unacceptable Version:** Supplier pays.").unwrap(), "Supplier pays.");
        assert_eq!(parse_candidate("Acceptable revision: X\n\nDemonstration 6\nProvision: y").unwrap(), "X");
        assert!(matches!(parse_candidate("  \n"), Err(Error::MalformedLlmOutput(_))));
        assert!(parse_candidate("Optimized Version:").is_err());
    }
}
