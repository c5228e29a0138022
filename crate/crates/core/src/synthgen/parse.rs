use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionPair {
    pub acceptable: String,
    pub unacceptable: String,
}

static SECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[*_#]*\b(un)?acceptable\s+revision[*_]*\s*:[*_]*").unwrap());
static STOP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s*_#]*(?:demonstration\s+\d+|query\s+provision\s*:|provision\s*:)").unwrap()
});

fn clean(s: &str) -> String {
    s.trim().trim_matches(|c: char| c == '*' || c == '"' || c.is_whitespace()).to_string()
}

/// Pulls the acceptable and unacceptable revisions out of a generation
/// reply. Section order does not matter; the first occurrence of each wins.
pub fn parse_pair(reply: &str) -> Result<RevisionPair> {
    let marks: Vec<(bool, usize, usize)> =
        SECTION.captures_iter(reply).map(|c| (c.get(1).is_some(), c.get(0).unwrap().start(), c.get(0).unwrap().end())).collect();
    let section = |unacceptable: bool| -> Option<String> {
        let (pos, &(_, _, body_start)) = marks.iter().enumerate().find(|(_, m)| m.0 == unacceptable)?;
        let mut end = marks.get(pos + 1).map_or(reply.len(), |m| m.1);
        if let Some(stop) = STOP.find(&reply[body_start..end]) {
            end = body_start + stop.start();
        }
        Some(clean(&reply[body_start..end]))
    };
    let acceptable = section(false).ok_or_else(|| Error::MalformedLlmOutput("missing acceptable revision".into()))?;
    let unacceptable = section(true).ok_or_else(|| Error::MalformedLlmOutput("missing unacceptable revision".into()))?;
    if acceptable.is_empty() || unacceptable.is_empty() {
        return Err(Error::MalformedLlmOutput("empty revision section".into()));
    }
    if acceptable == unacceptable {
        return Err(Error::MalformedLlmOutput("acceptable and unacceptable revisions are identical".into()));
    }
    Ok(RevisionPair { acceptable, unacceptable })
}

static REPHRASED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^[\s*_#]*rephrased\s+revision[*_]*\s*:[*_]*").unwrap());

/// Text of a rephrasing reply, without any echoed label.
pub fn parse_paraphrase(reply: &str) -> Result<String> {
    let body = REPHRASED.find(reply).map_or(reply, |m| &reply[m.end()..]);
    let text = clean(body);
    if text.is_empty() {
        return Err(Error::MalformedLlmOutput("empty paraphrase".into()));
    }
    Ok(text)
}
