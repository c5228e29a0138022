use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Keep,
    Insert,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpan {
    pub op: EditOp,
    pub tokens: Vec<String>,
}

/// Word-level edit script. Adjacent spans never share an op, and within a
/// changed region deletions precede insertions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub operations: Vec<EditSpan>,
}

impl EditScript {
    fn tokens_for(&self, keep_with: EditOp) -> Vec<&str> {
        self.operations
            .iter()
            .filter(|s| s.op == EditOp::Keep || s.op == keep_with)
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect()
    }

    /// Tokens of the left-hand text (Keep + Delete).
    pub fn source_tokens(&self) -> Vec<&str> {
        self.tokens_for(EditOp::Delete)
    }

    /// Tokens of the right-hand text (Keep + Insert).
    pub fn target_tokens(&self) -> Vec<&str> {
        self.tokens_for(EditOp::Insert)
    }

    pub fn kept_count(&self) -> usize {
        self.operations.iter().filter(|s| s.op == EditOp::Keep).map(|s| s.tokens.len()).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.operations.iter().all(|s| s.op == EditOp::Keep)
    }

    fn push(&mut self, op: EditOp, token: &str) {
        match self.operations.last_mut() {
            Some(last) if last.op == op => last.tokens.push(token.to_string()),
            _ => self.operations.push(EditSpan { op, tokens: vec![token.to_string()] }),
        }
    }
}

/// Minimal word-level diff via longest common subsequence over
/// whitespace-separated tokens.
pub fn diff_words(a: &str, b: &str) -> EditScript {
    let xs: Vec<&str> = a.split_whitespace().collect();
    let ys: Vec<&str> = b.split_whitespace().collect();
    let (n, m) = (xs.len(), ys.len());

    // lcs[i][j] = LCS length of xs[i..] and ys[j..], flattened row-major.
    let width = m + 1;
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if xs[i] == ys[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut script = EditScript::default();
    let (mut deleted, mut inserted): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
    let flush = |script: &mut EditScript, deleted: &mut Vec<&str>, inserted: &mut Vec<&str>| {
        for t in deleted.drain(..) {
            script.push(EditOp::Delete, t);
        }
        for t in inserted.drain(..) {
            script.push(EditOp::Insert, t);
        }
    };

    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && xs[i] == ys[j] {
            flush(&mut script, &mut deleted, &mut inserted);
            script.push(EditOp::Keep, xs[i]);
            i += 1;
            j += 1;
        } else if j == m || (i < n && lcs[(i + 1) * width + j] >= lcs[i * width + j + 1]) {
            deleted.push(xs[i]);
            i += 1;
        } else {
            inserted.push(ys[j]);
            j += 1;
        }
    }
    flush(&mut script, &mut deleted, &mut inserted);
    script
}
