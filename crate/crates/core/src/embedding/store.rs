use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{dot, l2_raw, EmbeddingVector};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub revision_id: String,
    pub vector: EmbeddingVector,
    pub label: Label,
    pub provision_number: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Cosine,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub record: &'a EmbeddingRecord,
    /// Cosine similarity (higher is better) or L2 distance (lower is better).
    pub score: f64,
}

/// In-memory exact-search store. All records share one model and dimension.
#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    records: Vec<EmbeddingRecord>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.vector.dim())
    }

    pub fn model_id(&self) -> Option<&str> {
        self.records.first().map(|r| r.vector.model_id())
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, revision_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(revision_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, revision_id: &str) -> bool {
        self.index.contains_key(revision_id)
    }

    /// Validates a record against the store without inserting it.
    pub fn check(&self, record: &EmbeddingRecord) -> Result<()> {
        if self.index.contains_key(&record.revision_id) {
            return Err(Error::DuplicateId(record.revision_id.clone()));
        }
        if record.vector.norm() == 0.0 {
            return Err(Error::ZeroVector);
        }
        if let Some(first) = self.records.first() {
            if first.vector.dim() != record.vector.dim() {
                return Err(Error::DimMismatch { expected: first.vector.dim(), actual: record.vector.dim() });
            }
            if first.vector.model_id() != record.vector.model_id() {
                return Err(Error::ModelMismatch {
                    expected: first.vector.model_id().to_string(),
                    actual: record.vector.model_id().to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<()> {
        self.check(&record)?;
        self.index.insert(record.revision_id.clone(), self.records.len());
        self.norms.push(record.vector.norm());
        self.records.push(record);
        Ok(())
    }

    /// Exact nearest-neighbour search. Results are the best `top_k` records
    /// passing `filter`, best first; equal scores fall back to ascending id.
    pub fn query(
        &self,
        query: &EmbeddingVector,
        metric: Metric,
        top_k: usize,
        filter: Option<&dyn Fn(&EmbeddingRecord) -> bool>,
    ) -> Result<Vec<Hit<'_>>> {
        if top_k == 0 {
            return Err(Error::InvalidInput("top_k must be positive".into()));
        }
        let Some(dim) = self.dim() else {
            return Err(Error::EmptyStore);
        };
        if query.dim() != dim {
            return Err(Error::DimMismatch { expected: dim, actual: query.dim() });
        }
        let qnorm = query.norm();
        if metric == Metric::Cosine && qnorm == 0.0 {
            return Err(Error::ZeroVector);
        }

        let mut hits: Vec<Hit<'_>> = self
            .records
            .iter()
            .zip(&self.norms)
            .filter(|(r, _)| filter.is_none_or(|f| f(r)))
            .map(|(r, &norm)| {
                let score = match metric {
                    Metric::Cosine => (dot(query.values(), r.vector.values()) / (qnorm * norm)).clamp(-1.0, 1.0),
                    Metric::L2 => l2_raw(query.values(), r.vector.values()),
                };
                Hit { record: r, score }
            })
            .collect();
        if hits.is_empty() {
            return Err(Error::EmptyStore);
        }

        let order = |a: &Hit<'_>, b: &Hit<'_>| {
            let by_score = match metric {
                Metric::Cosine => b.score.total_cmp(&a.score),
                Metric::L2 => a.score.total_cmp(&b.score),
            };
            by_score.then_with(|| a.record.revision_id.cmp(&b.record.revision_id))
        };
        if top_k < hits.len() {
            hits.select_nth_unstable_by(top_k - 1, order);
            hits.truncate(top_k);
        }
        hits.sort_by(order);
        Ok(hits)
    }

    pub fn save(&self, files: &StoreFiles) -> Result<()> {
        let mut bin = Vec::with_capacity(self.records.len() * self.dim().unwrap_or(0) * 4);
        let mut index = Vec::with_capacity(self.records.len());
        for r in &self.records {
            index.push(IndexEntry::for_record(r, bin.len() as u64));
            bin.extend(r.vector.values().iter().flat_map(|v| v.to_le_bytes()));
        }
        jsonl::write_atomic(&files.vectors, &bin)?;
        jsonl::write_jsonl(&files.index, &index)
    }

    /// Loads a store written by [`save`](Self::save) or [`PersistentStore`].
    /// Index lines pointing past the end of the vector file are treated as a
    /// torn append and dropped.
    pub fn load(files: &StoreFiles) -> Result<Self> {
        let entries: Vec<IndexEntry> = jsonl::read_jsonl(&files.index)?;
        let mut bin = Vec::new();
        if files.vectors.exists() {
            File::open(&files.vectors)?.read_to_end(&mut bin)?;
        }
        let mut store = Self::new();
        for e in entries {
            let start = e.offset as usize;
            let end = start + e.dim * 4;
            if end > bin.len() {
                log::warn!("{}: record {} truncated, ignoring", files.vectors.display(), e.revision_id);
                break;
            }
            let values = bin[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(EmbeddingRecord {
                revision_id: e.revision_id,
                vector: EmbeddingVector::new(values, e.model_id)?,
                label: e.label,
                provision_number: e.provision_number,
            })?;
        }
        Ok(store)
    }
}

/// Locations of the vector sidecar (little-endian f32) and its JSONL index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreFiles {
    pub vectors: PathBuf,
    pub index: PathBuf,
}

impl StoreFiles {
    /// `embeddings.bin` + `embeddings.idx.jsonl` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self { vectors: dir.join("embeddings.bin"), index: dir.join("embeddings.idx.jsonl") }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    revision_id: String,
    label: Label,
    provision_number: String,
    model_id: String,
    dim: usize,
    offset: u64,
}

impl IndexEntry {
    fn for_record(r: &EmbeddingRecord, offset: u64) -> Self {
        Self {
            revision_id: r.revision_id.clone(),
            label: r.label,
            provision_number: r.provision_number.clone(),
            model_id: r.vector.model_id().to_string(),
            dim: r.vector.dim(),
            offset,
        }
    }
}

/// A [`VectorStore`] mirrored to disk through an append-only path.
///
/// Vector bytes are written and synced before the index line; the index
/// line is the commit point, so a crash between the two leaves orphan bytes
/// that later appends skip over.
#[derive(Debug)]
pub struct PersistentStore {
    store: VectorStore,
    files: StoreFiles,
}

impl PersistentStore {
    pub fn open(files: StoreFiles) -> Result<Self> {
        jsonl::repair_tail(&files.index)?;
        let store = VectorStore::load(&files)?;
        Ok(Self { store, files })
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn files(&self) -> &StoreFiles {
        &self.files
    }

    pub fn append(&mut self, records: Vec<EmbeddingRecord>) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        // Validate the whole batch against a scratch copy of the id set first.
        let mut staged = VectorStore::new();
        for r in &records {
            self.store.check(r)?;
            staged.insert(r.clone())?;
        }

        let mut bin = OpenOptions::new().create(true).append(true).open(&self.files.vectors)?;
        let mut offset = bin.metadata()?.len();
        let mut entries = Vec::with_capacity(records.len());
        let mut bytes = Vec::new();
        for r in &records {
            entries.push(IndexEntry::for_record(r, offset));
            let before = bytes.len();
            bytes.extend(r.vector.values().iter().flat_map(|v| v.to_le_bytes()));
            offset += (bytes.len() - before) as u64;
        }
        bin.write_all(&bytes)?;
        bin.sync_data()?;
        jsonl::append_jsonl(&self.files.index, &entries)?;

        for r in records {
            self.store.insert(r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, values: &[f32]) -> EmbeddingRecord {
        EmbeddingRecord {
            revision_id: id.into(),
            vector: EmbeddingVector::new(values.to_vec(), "m").unwrap(),
            label: Label::Acceptable,
            provision_number: "1".into(),
        }
    }

    fn random_store(n: usize, dim: usize, seed: u64) -> VectorStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorStore::from_records((0..n).map(|i| {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            rec(&format!("r{i:05}"), &v)
        }))
        .unwrap()
    }

    #[test]
    fn self_retrieval_scores_one() {
        let store = random_store(50, 8, 1);
        let target = store.records()[17].clone();
        let hits = store.query(&target.vector, Metric::Cosine, 3, None).unwrap();
        assert_eq!(hits[0].record.revision_id, target.revision_id);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let store = VectorStore::from_records([rec("b", &[1.0, 0.0]), rec("a", &[2.0, 0.0]), rec("c", &[0.0, 1.0])]).unwrap();
        let q = EmbeddingVector::new(vec![1.0, 0.0], "m").unwrap();
        let ids: Vec<_> = store.query(&q, Metric::Cosine, 3, None).unwrap().iter().map(|h| h.record.revision_id.clone()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn matches_exhaustive_sort() {
        let store = random_store(1000, 16, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for metric in [Metric::Cosine, Metric::L2] {
            let q = EmbeddingVector::new((0..16).map(|_| rng.random_range(-1.0..1.0)).collect(), "m").unwrap();
            let mut oracle: Vec<(f64, &str)> = store
                .records()
                .iter()
                .map(|r| {
                    let s = match metric {
                        Metric::Cosine => super::super::cosine(&q, &r.vector).unwrap(),
                        Metric::L2 => super::super::l2(&q, &r.vector).unwrap(),
                    };
                    (s, r.revision_id.as_str())
                })
                .collect();
            oracle.sort_by(|a, b| match metric {
                Metric::Cosine => b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)),
                Metric::L2 => a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)),
            });
            let hits = store.query(&q, metric, 10, None).unwrap();
            assert_eq!(hits.len(), 10);
            for (h, o) in hits.iter().zip(&oracle) {
                assert_eq!(h.record.revision_id, o.1);
            }
        }
    }

    #[test]
    fn errors_and_filter() {
        let empty = VectorStore::new();
        let q = EmbeddingVector::new(vec![1.0, 0.0], "m").unwrap();
        assert!(matches!(empty.query(&q, Metric::Cosine, 1, None), Err(Error::EmptyStore)));

        let store = VectorStore::from_records([rec("a", &[1.0, 0.0]), rec("b", &[0.0, 1.0])]).unwrap();
        let bad = EmbeddingVector::new(vec![1.0], "m").unwrap();
        assert!(matches!(store.query(&bad, Metric::L2, 1, None), Err(Error::DimMismatch { .. })));
        let none = |_: &EmbeddingRecord| false;
        assert!(matches!(store.query(&q, Metric::L2, 1, Some(&none)), Err(Error::EmptyStore)));
        let only_b = |r: &EmbeddingRecord| r.revision_id == "b";
        let hits = store.query(&q, Metric::Cosine, 5, Some(&only_b)).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(matches!(store.clone().insert(rec("a", &[1.0, 1.0])), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let files = StoreFiles::in_dir(dir.path());
        let store = random_store(200, 12, 3);
        store.save(&files).unwrap();
        let loaded = VectorStore::load(&files).unwrap();
        assert_eq!(loaded.records(), store.records());
        let q = store.records()[5].vector.clone();
        let a: Vec<_> = store.query(&q, Metric::L2, 20, None).unwrap().iter().map(|h| (h.record.revision_id.clone(), h.score)).collect();
        let b: Vec<_> = loaded.query(&q, Metric::L2, 20, None).unwrap().iter().map(|h| (h.record.revision_id.clone(), h.score)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn persistent_append_survives_reopen_and_torn_index() {
        let dir = tempfile::tempdir().unwrap();
        let files = StoreFiles::in_dir(dir.path());
        let mut ps = PersistentStore::open(files.clone()).unwrap();
        ps.append(vec![rec("a", &[1.0, 2.0]), rec("b", &[3.0, 4.0])]).unwrap();
        ps.append(vec![rec("c", &[5.0, 6.0])]).unwrap();
        assert!(ps.append(vec![rec("c", &[5.0, 6.0])]).is_err());

        // simulate a crash after the vector bytes but before the index line
        OpenOptions::new().append(true).open(&files.vectors).unwrap().write_all(&[0u8; 8]).unwrap();
        OpenOptions::new().append(true).open(&files.index).unwrap().write_all(b"{\"revision_id\":\"d\"").unwrap();

        let mut reopened = PersistentStore::open(files.clone()).unwrap();
        assert_eq!(reopened.store().records(), ps.store().records());
        reopened.append(vec![rec("d", &[7.0, 8.0])]).unwrap();
        let again = PersistentStore::open(files).unwrap();
        assert_eq!(again.store().len(), 4);
        assert_eq!(again.store().get("d").unwrap().vector.values(), &[7.0, 8.0]);
    }
}
