use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INSERT_OPEN: &str = "{++";
const INSERT_CLOSE: &str = "++}";
const DELETE_OPEN: &str = "{--";
const DELETE_CLOSE: &str = "--}";
const TOKENS: [&str; 4] = [INSERT_OPEN, INSERT_CLOSE, DELETE_OPEN, DELETE_CLOSE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackedEdits {
    pub has_edits: bool,
    /// Text with insertions applied and deletions dropped.
    pub accepted_text: String,
    /// Text as it was before the tracked edits.
    pub original_text: String,
}

fn next_token(text: &str, from: usize) -> Option<(usize, &'static str)> {
    TOKENS
        .iter()
        .filter_map(|t| text[from..].find(t).map(|i| (from + i, *t)))
        .min_by_key(|(i, _)| *i)
}

/// Resolves CriticMarkup-style insertion and deletion markers.
pub fn detect_tracked_edits(text: &str) -> Result<TrackedEdits> {
    let mut accepted = String::with_capacity(text.len());
    let mut original = String::with_capacity(text.len());
    let mut has_edits = false;
    let mut pos = 0;

    while let Some((start, token)) = next_token(text, pos) {
        let close = match token {
            INSERT_OPEN => INSERT_CLOSE,
            DELETE_OPEN => DELETE_CLOSE,
            _ => {
                return Err(Error::UnbalancedMarkers {
                    offset: start,
                    detail: format!("closing {token:?} without an opening marker"),
                })
            }
        };
        let plain = &text[pos..start];
        accepted.push_str(plain);
        original.push_str(plain);

        let body_start = start + token.len();
        let Some((end, found)) = next_token(text, body_start) else {
            return Err(Error::UnbalancedMarkers { offset: start, detail: format!("{token:?} is never closed") });
        };
        if found != close {
            return Err(Error::UnbalancedMarkers {
                offset: end,
                detail: format!("expected {close:?} but found {found:?}"),
            });
        }
        let body = &text[body_start..end];
        if token == INSERT_OPEN {
            accepted.push_str(body);
        } else {
            original.push_str(body);
        }
        has_edits = true;
        pos = end + close.len();
    }
    accepted.push_str(&text[pos..]);
    original.push_str(&text[pos..]);

    // Splicing can glue stray braces and plus/minus runs into a new marker,
    // e.g. "{" followed by an insertion that starts with "++".
    for resolved in [&accepted, &original] {
        if let Some((offset, token)) = next_token(resolved, 0) {
            return Err(Error::UnbalancedMarkers {
                offset,
                detail: format!("resolving markers produces a stray {token:?}"),
            });
        }
    }

    Ok(TrackedEdits { has_edits, accepted_text: accepted, original_text: original })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn substitution() {
        let t = detect_tracked_edits("pay within {--30--}{++60++} days").unwrap();
        assert!(t.has_edits);
        assert_eq!(t.accepted_text, "pay within 60 days");
        assert_eq!(t.original_text, "pay within 30 days");
    }

    #[test]
    fn marker_free_is_identity() {
        let input = "The supplier shall deliver on time.";
        let t = detect_tracked_edits(input).unwrap();
        assert!(!t.has_edits);
        assert_eq!(t.accepted_text, input);
        assert_eq!(t.original_text, input);
    }

    #[test]
    fn unclosed_insertion() {
        assert!(matches!(detect_tracked_edits("{++x"), Err(Error::UnbalancedMarkers { offset: 0, .. })));
    }

    #[test]
    fn stray_closer_and_mismatch() {
        assert!(detect_tracked_edits("abc --} def").is_err());
        assert!(detect_tracked_edits("{++ abc --}").is_err());
        assert!(detect_tracked_edits("{++ a {-- b --} ++}").is_err());
    }

    #[test]
    fn spliced_marker_rejected() {
        assert!(detect_tracked_edits("a{{++++ b++}").is_err());
    }

    proptest! {
        #[test]
        fn accepted_text_has_no_edits(s in "[a{}+\\- ]{0,40}") {
            if let Ok(t) = detect_tracked_edits(&s) {
                let again = detect_tracked_edits(&t.accepted_text).unwrap();
                prop_assert!(!again.has_edits);
                prop_assert_eq!(&again.accepted_text, &t.accepted_text);
            }
        }
    }
}
