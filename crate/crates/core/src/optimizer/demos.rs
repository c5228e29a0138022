use std::collections::{BTreeMap, HashMap};

use super::prompt::OptimizationDemo;
use crate::corpus::{Label, Revision};
use crate::embedding::{cosine, EmbeddingVector, VectorStore};
use crate::error::{Error, Result};

/// An unacceptable revision paired with an acceptable one for the same
/// provision, keyed for retrieval by the unacceptable member's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTriple {
    pub id: String,
    pub provision_number: String,
    pub unacceptable_id: String,
    pub acceptable_id: String,
    pub demo: OptimizationDemo,
    pub key: EmbeddingVector,
}

#[derive(Debug, Clone, Default)]
pub struct DemoPool {
    triples: Vec<DemoTriple>,
}

impl DemoPool {
    pub fn from_triples(mut triples: Vec<DemoTriple>) -> Self {
        triples.sort_by(|a, b| a.id.cmp(&b.id));
        Self { triples }
    }

    /// Generated revisions pair through their shared `pair_id`. Other
    /// revisions pair each unacceptable one with the most similar acceptable
    /// revision of the same provision. Revisions absent from `store` are
    /// skipped. `provision_texts` maps provision numbers to template text.
    pub fn build(revisions: &[Revision], store: &VectorStore, provision_texts: &HashMap<String, String>) -> Result<Self> {
        let vector = |r: &Revision| store.get(&r.id).map(|rec| &rec.vector);
        let provision = |n: &str| provision_texts.get(n).cloned().unwrap_or_default();
        let mut triples = Vec::new();

        let mut by_pair: BTreeMap<&str, (Option<&Revision>, Option<&Revision>)> = BTreeMap::new();
        let mut real_acceptable: BTreeMap<&str, Vec<&Revision>> = BTreeMap::new();
        let mut real_unacceptable = Vec::new();
        for r in revisions.iter().filter(|r| vector(r).is_some()) {
            match (&r.pair_id, r.label) {
                (Some(p), Label::Acceptable) => by_pair.entry(p).or_default().0 = Some(r),
                (Some(p), Label::Unacceptable) => by_pair.entry(p).or_default().1 = Some(r),
                (None, Label::Acceptable) => real_acceptable.entry(&r.provision_number).or_default().push(r),
                (None, Label::Unacceptable) => real_unacceptable.push(r),
                _ => {}
            }
        }

        for (pair_id, members) in by_pair {
            if let (Some(a), Some(u)) = members {
                triples.push(DemoTriple {
                    id: pair_id.to_string(),
                    provision_number: u.provision_number.clone(),
                    unacceptable_id: u.id.clone(),
                    acceptable_id: a.id.clone(),
                    demo: OptimizationDemo { provision: provision(&u.provision_number), unacceptable: u.text.clone(), acceptable: a.text.clone() },
                    key: vector(u).unwrap().clone(),
                });
            }
        }
        for u in real_unacceptable {
            let Some(candidates) = real_acceptable.get(u.provision_number.as_str()) else { continue };
            let key = vector(u).unwrap();
            let mut best: Option<(&Revision, f64)> = None;
            for a in candidates {
                let sim = cosine(key, vector(a).unwrap())?;
                let better = match best {
                    None => true,
                    Some((b, s)) => sim > s || (sim == s && a.id < b.id),
                };
                if better {
                    best = Some((a, sim));
                }
            }
            let (a, _) = best.expect("non-empty candidate list");
            triples.push(DemoTriple {
                id: u.id.clone(),
                provision_number: u.provision_number.clone(),
                unacceptable_id: u.id.clone(),
                acceptable_id: a.id.clone(),
                demo: OptimizationDemo { provision: provision(&u.provision_number), unacceptable: u.text.clone(), acceptable: a.text.clone() },
                key: key.clone(),
            });
        }
        Ok(Self::from_triples(triples))
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[DemoTriple] {
        &self.triples
    }
}

/// The `n` triples whose unacceptable member is most similar to the query,
/// best first, ties by id. Triples containing `exclude_id` are skipped.
pub fn select_demonstrations<'p>(
    pool: &'p DemoPool,
    query: &EmbeddingVector,
    exclude_id: Option<&str>,
    n: usize,
) -> Result<Vec<&'p DemoTriple>> {
    let eligible: Vec<&DemoTriple> = pool
        .triples
        .iter()
        .filter(|t| exclude_id.is_none_or(|x| t.unacceptable_id != x && t.acceptable_id != x))
        .collect();
    if n == 0 {
        return Err(Error::InvalidInput("n_demonstrations must be at least 1".into()));
    }
    if eligible.len() < n {
        return Err(Error::InsufficientDemonstrations { needed: n, available: eligible.len() });
    }
    let mut scored = eligible.into_iter().map(|t| Ok((cosine(query, &t.key)?, t))).collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(scored.into_iter().take(n).map(|(_, t)| t).collect())
}
