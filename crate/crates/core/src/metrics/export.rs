use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embedding::{EmbeddingRecord, EmbeddingVector, VectorStore};
use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedEmbedding {
    pub revision_id: String,
    pub label: Label,
    pub provision_number: String,
    pub model_id: String,
    pub vector: Vec<f32>,
}

/// One JSON line per record, in store order.
pub fn export_embeddings(store: &VectorStore, path: &Path) -> Result<usize> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let rows: Vec<ExportedEmbedding> = store
        .records()
        .iter()
        .map(|r| ExportedEmbedding {
            revision_id: r.revision_id.clone(),
            label: r.label,
            provision_number: r.provision_number.clone(),
            model_id: r.vector.model_id().to_string(),
            vector: r.vector.values().to_vec(),
        })
        .collect();
    jsonl::write_jsonl(path, &rows)?;
    Ok(rows.len())
}

pub fn import_embeddings(path: &Path) -> Result<VectorStore> {
    let rows: Vec<ExportedEmbedding> = jsonl::read_jsonl(path)?;
    rows.into_iter()
        .map(|r| {
            Ok(EmbeddingRecord {
                revision_id: r.revision_id,
                vector: EmbeddingVector::new(r.vector, r.model_id)?,
                label: r.label,
                provision_number: r.provision_number,
            })
        })
        .collect::<Result<Vec<_>>>()
        .and_then(VectorStore::from_records)
}
