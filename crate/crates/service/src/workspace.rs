//! On-disk layout of a workspace directory.
//!
//! ```text
//! config.json            providers, thresholds, seeds
//! template.json          reference contract for diffs and weak labels
//! contracts/{id}.json    ingested contracts
//! revisions.jsonl        labeled store (append-only)
//! pending.jsonl          unlabeled revisions awaiting review
//! embeddings.bin         vector sidecar, plus embeddings.idx.jsonl
//! models/v{N}.json       immutable model versions, models/CURRENT points at one
//! decisions.jsonl        review decisions
//! flags.jsonl            flag state changes, latest line per revision wins
//! optimizations.jsonl    optimizer results, latest line per revision wins
//! ```

use std::path::{Path, PathBuf};

use revkit_core::classifier::EnsembleModel;
use revkit_core::corpus::Contract;
use revkit_core::embedding::StoreFiles;
use revkit_core::jsonl;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, ServiceError};
use crate::review::ModelPointer;

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

/// Ids end up in file names, so keep them to a safe alphabet.
pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Validation(format!("contract id {id:?} must match [A-Za-z0-9._-]+")))
    }
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("contracts"))?;
        std::fs::create_dir_all(root.join("models"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn template_path(&self) -> PathBuf {
        self.root.join("template.json")
    }

    pub fn revisions_path(&self) -> PathBuf {
        self.root.join("revisions.jsonl")
    }

    pub fn pending_path(&self) -> PathBuf {
        self.root.join("pending.jsonl")
    }

    pub fn decisions_path(&self) -> PathBuf {
        self.root.join("decisions.jsonl")
    }

    pub fn flags_path(&self) -> PathBuf {
        self.root.join("flags.jsonl")
    }

    pub fn optimizations_path(&self) -> PathBuf {
        self.root.join("optimizations.jsonl")
    }

    pub fn store_files(&self) -> StoreFiles {
        StoreFiles::in_dir(&self.root)
    }

    fn contract_path(&self, id: &str) -> Result<PathBuf> {
        validate_id(id)?;
        Ok(self.root.join("contracts").join(format!("{id}.json")))
    }

    fn model_path(&self, version: u64) -> PathBuf {
        self.root.join("models").join(format!("v{version}.json"))
    }

    fn current_path(&self) -> PathBuf {
        self.root.join("models").join("CURRENT")
    }

    /// Repairs a torn tail, then reads every record. Missing files read as empty.
    pub fn read_log<T: DeserializeOwned>(&self, path: &Path) -> Result<Vec<T>> {
        jsonl::repair_tail(path)?;
        Ok(jsonl::read_jsonl(path)?)
    }

    /// Appends and fsyncs.
    pub fn append_log<T: Serialize>(&self, path: &Path, records: &[T]) -> Result<()> {
        Ok(jsonl::append_jsonl(path, records)?)
    }

    fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(jsonl::write_atomic(path, &bytes)?)
    }

    pub fn load_template(&self) -> Result<Option<Contract>> {
        Self::read_json(&self.template_path())
    }

    pub fn save_template(&self, template: &Contract) -> Result<()> {
        Self::write_json(&self.template_path(), template)
    }

    pub fn load_contract(&self, id: &str) -> Result<Option<Contract>> {
        Self::read_json(&self.contract_path(id)?)
    }

    pub fn save_contract(&self, contract: &Contract) -> Result<()> {
        Self::write_json(&self.contract_path(&contract.id)?, contract)
    }

    pub fn current_model(&self) -> Result<Option<ModelPointer>> {
        Self::read_json(&self.current_path())
    }

    pub fn load_model(&self, version: u64) -> Result<EnsembleModel> {
        let path = self.model_path(version);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ServiceError::NotFound(format!("model version {version} ({}): {e}", path.display())))?;
        Ok(EnsembleModel::from_json(&text)?)
    }

    /// Highest version present in `models/`, whether or not CURRENT points at it.
    pub fn latest_model_version(&self) -> Result<u64> {
        let mut latest = 0;
        for entry in std::fs::read_dir(self.root.join("models"))? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(v) = name.strip_prefix('v').and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse().ok()) {
                latest = latest.max(v);
            }
        }
        Ok(latest)
    }

    /// Writes `models/v{version}.json`. Versions are immutable.
    pub fn save_model(&self, version: u64, model: &EnsembleModel) -> Result<()> {
        let path = self.model_path(version);
        if path.exists() {
            return Err(ServiceError::Conflict(format!("model version {version} already exists")));
        }
        Ok(jsonl::write_atomic(&path, model.to_json()?.as_bytes())?)
    }

    /// Replaces the CURRENT pointer atomically.
    pub fn set_current(&self, pointer: ModelPointer) -> Result<()> {
        Self::write_json(&self.current_path(), &pointer)
    }
}
