use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Revision};
use crate::error::{Error, Result};
use crate::jsonl;

/// Soft labels in class order: paraphrase, acceptable/acceptable of the same
/// provision, acceptable/unacceptable of the same provision, unrelated provisions.
pub const GRADED_LABELS: [f64; 4] = [1.0, 0.5, 0.3, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub text_a: String,
    pub text_b: String,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSampling {
    /// Pairs per class. `None` takes as many as the smallest class allows.
    pub per_class: Option<usize>,
    pub seed: u64,
}

/// Soft label for a pair, or `None` when the pair belongs to no class
/// (two unacceptable or unlabeled revisions of the same provision).
pub fn graded_label(a: &Revision, b: &Revision, paraphrase: bool) -> Option<f64> {
    if paraphrase {
        return Some(GRADED_LABELS[0]);
    }
    if a.provision_number != b.provision_number {
        return Some(GRADED_LABELS[3]);
    }
    match (a.label, b.label) {
        (Label::Acceptable, Label::Acceptable) => Some(GRADED_LABELS[1]),
        (Label::Acceptable, Label::Unacceptable) | (Label::Unacceptable, Label::Acceptable) => Some(GRADED_LABELS[2]),
        _ => None,
    }
}

/// Builds a class-balanced set of reranker training pairs.
///
/// Pair candidates are never materialized: each class is counted
/// combinatorially and sampled by unranking uniformly drawn indices, so the
/// cost is linear in the number of revisions plus pairs drawn.
pub fn build_graded_pairs(
    revisions: &[Revision],
    paraphrases: &HashMap<String, String>,
    sampling: PairSampling,
) -> Result<Vec<ScoredPair>> {
    let mut sorted: Vec<&Revision> = revisions.iter().collect();
    sorted.sort_by(|a, b| a.provision_number.cmp(&b.provision_number).then_with(|| a.id.cmp(&b.id)));

    let mut groups: BTreeMap<&str, (Vec<&Revision>, Vec<&Revision>)> = BTreeMap::new();
    for r in &sorted {
        let entry = groups.entry(r.provision_number.as_str()).or_default();
        match r.label {
            Label::Acceptable => entry.0.push(r),
            Label::Unacceptable => entry.1.push(r),
            Label::Unlabeled => {}
        }
    }
    // Contiguous provision blocks over `sorted`: (start, end).
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    for (i, r) in sorted.iter().enumerate() {
        match blocks.last_mut() {
            Some((start, end)) if sorted[*start].provision_number == r.provision_number => *end = i + 1,
            _ => blocks.push((i, i + 1)),
        }
    }

    let para: Vec<(&Revision, &String)> =
        sorted.iter().filter_map(|r| paraphrases.get(&r.id).map(|p| (*r, p))).collect();
    let same_acc: Vec<usize> = groups.values().map(|(a, _)| a.len() * a.len().saturating_sub(1) / 2).collect();
    let cross: Vec<usize> = groups.values().map(|(a, u)| a.len() * u.len()).collect();
    let n = sorted.len();
    let unrelated: Vec<usize> = blocks.iter().map(|&(s, e)| (e - s) * (n - e)).collect();

    let counts = [para.len(), same_acc.iter().sum(), cross.iter().sum(), unrelated.iter().sum::<usize>()];
    for (count, label) in counts.iter().zip(GRADED_LABELS) {
        if *count == 0 {
            return Err(Error::InsufficientData(format!("no candidate pairs for label {label}")));
        }
    }
    let take = counts.iter().copied().min().unwrap().min(sampling.per_class.unwrap_or(usize::MAX));

    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut draw = |count: usize| {
        let mut idx = rand::seq::index::sample(&mut rng, count, take).into_vec();
        idx.sort_unstable();
        idx
    };
    let pair = |a: &Revision, b: &Revision, label| ScoredPair { text_a: a.text.clone(), text_b: b.text.clone(), label };

    let mut out = Vec::with_capacity(take * 4);
    for i in draw(counts[0]) {
        let (r, p) = para[i];
        out.push(ScoredPair { text_a: r.text.clone(), text_b: p.clone(), label: GRADED_LABELS[0] });
    }
    let group_list: Vec<&(Vec<&Revision>, Vec<&Revision>)> = groups.values().collect();
    for i in draw(counts[1]) {
        let (g, mut r) = locate(&same_acc, i);
        let acc = &group_list[g].0;
        // unrank (x, y), x < y, in row-major order of the upper triangle
        let mut x = 0;
        while r >= acc.len() - 1 - x {
            r -= acc.len() - 1 - x;
            x += 1;
        }
        out.push(pair(acc[x], acc[x + 1 + r], GRADED_LABELS[1]));
    }
    for i in draw(counts[2]) {
        let (g, r) = locate(&cross, i);
        let (acc, unacc) = group_list[g];
        out.push(pair(acc[r / unacc.len()], unacc[r % unacc.len()], GRADED_LABELS[2]));
    }
    for i in draw(counts[3]) {
        let (b, r) = locate(&unrelated, i);
        let (start, end) = blocks[b];
        let partners = n - end;
        out.push(pair(sorted[start + r / partners], sorted[end + r % partners], GRADED_LABELS[3]));
    }
    Ok(out)
}

/// Finds the bucket holding flat index `i` and the offset inside it.
fn locate(sizes: &[usize], mut i: usize) -> (usize, usize) {
    for (bucket, &size) in sizes.iter().enumerate() {
        if i < size {
            return (bucket, i);
        }
        i -= size;
    }
    unreachable!("index beyond total count")
}

pub fn write_pairs_jsonl(path: &Path, pairs: &[ScoredPair]) -> Result<()> {
    jsonl::write_jsonl(path, pairs)
}
