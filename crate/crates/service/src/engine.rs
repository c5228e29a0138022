//! Workspace state shared by the CLI and the HTTP API.
//!
//! Reads take the state lock shared; every write goes through the exclusive
//! lock, so writes are serialized per workspace. The serving model sits
//! behind its own pointer and is replaced whole, so a request that grabbed a
//! snapshot keeps using it to the end.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use revkit_core::classifier::{predict, train_ensemble, EnsembleModel, Prediction, TrainingSummary};
use revkit_core::corpus::{detect_tracked_edits, diff_words, normalize_whitespace, weak_label_at, Contract, EditScript, Label, Revision, Source, WeakLabeling};
use revkit_core::embedding::{embed_texts, Embedder, EmbeddingRecord, EmbeddingVector, HashingEmbedder, HttpEmbedder, PersistentStore, VectorStore};
use revkit_core::llm::{ChatModel, ChatRequest, HttpChatModel, ScriptedChat};
use revkit_core::optimizer::{optimize, BatchFailure, BatchReport, ClassifierReward, DemoPool, OptimizationQuery, RewardModel};
use revkit_core::retrieval::{related_clauses, EmbeddingScorer, HttpScorer, Scorer};
use revkit_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::config::{Config, EmbeddingSettings, LlmSettings, ScorerSettings};
use crate::error::{Result, ServiceError};
use crate::review::{
    band_of, is_flagged, sort_flags, DecisionRecord, FlagRecord, FlagStatus, ModelPointer, OptimizationRecord, ReviewDecision, Verdict,
};
use crate::workspace::{validate_id, Workspace};

/// Stand-in chat model when no endpoint is configured.
struct NoChatModel;

impl ChatModel for NoChatModel {
    fn model_id(&self) -> &str {
        "none"
    }

    fn complete(&self, _: &ChatRequest) -> revkit_core::Result<String> {
        Err(CoreError::ProviderUnavailable("no LLM endpoint configured (set llm in config.json or REVKIT_LLM_URL)".into()))
    }
}

#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub llm: Arc<dyn ChatModel>,
    pub scorer: Arc<dyn Scorer>,
}

impl Providers {
    pub fn from_config(config: &Config) -> Result<Self> {
        let embedder: Arc<dyn Embedder> = match &config.embedding {
            EmbeddingSettings::Hashing { dim } => Arc::new(HashingEmbedder::new(*dim)),
            EmbeddingSettings::Http(c) => Arc::new(HttpEmbedder::new(c.clone())?),
        };
        let llm: Arc<dyn ChatModel> = match &config.llm {
            LlmSettings::None => Arc::new(NoChatModel),
            LlmSettings::Http(c) => Arc::new(HttpChatModel::new(c.clone())?),
            LlmSettings::Scripted { replies } => Arc::new(ScriptedChat::cycling(replies.clone())),
        };
        let scorer: Arc<dyn Scorer> = match &config.scorer {
            ScorerSettings::Embedding => Arc::new(EmbeddingScorer::new(embedder.clone())),
            ScorerSettings::Http(c) => Arc::new(HttpScorer::new(c.clone())?),
        };
        Ok(Self { embedder, llm, scorer })
    }
}

#[derive(Debug)]
pub struct ServingModel {
    pub version: u64,
    pub model: EnsembleModel,
}

struct State {
    store: PersistentStore,
    labeled: Vec<Revision>,
    labeled_ids: HashSet<String>,
    pending: BTreeMap<String, Revision>,
    flags: BTreeMap<String, FlagRecord>,
    optimizations: HashMap<String, OptimizationRecord>,
    decisions: Vec<DecisionRecord>,
    template: Option<Contract>,
}

impl State {
    /// Revisions added by decisions that a later decision from the same
    /// reviewer on the same revision replaced.
    fn superseded(&self) -> HashSet<String> {
        let mut latest: HashMap<(&str, &str), &str> = HashMap::new();
        let mut all = HashSet::new();
        for d in &self.decisions {
            latest.insert((&d.decision.revision_id, &d.decision.reviewer), &d.appended_revision_id);
            all.insert(d.appended_revision_id.clone());
        }
        for id in latest.values() {
            all.remove(*id);
        }
        all
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionPrediction {
    pub revision_id: String,
    pub provision_number: String,
    pub text: String,
    pub prediction: Prediction,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub contract_id: String,
    pub model_version: u64,
    pub predictions: Vec<RevisionPrediction>,
    /// Sorted for the review queue.
    pub flags: Vec<FlagRecord>,
    pub flagged_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub contract_id: String,
    pub model_version: u64,
    pub revisions: usize,
    pub flags: Vec<FlagRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionDetail {
    pub revision: Revision,
    pub provision_title: Option<String>,
    pub template_text: Option<String>,
    /// Word diff from the template text to the revision text.
    pub diff: Option<EditScript>,
    pub flag: Option<FlagRecord>,
    pub optimization: Option<OptimizationRecord>,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub candidate_index: Option<usize>,
    #[serde(default)]
    pub final_text: Option<String>,
    pub reviewer: String,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub record: DecisionRecord,
    pub flag: FlagRecord,
    pub labeled_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RetrainOutcome {
    Trained {
        version: u64,
        previous_version: Option<u64>,
        decisions_since_snapshot: usize,
        training_records: usize,
        metrics: TrainingSummary,
    },
    Skipped {
        reason: String,
        decisions_since_snapshot: usize,
        required: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: u64,
    pub model_id: String,
    pub k: usize,
    pub dim: usize,
    pub metrics: TrainingSummary,
    pub decisions_since_snapshot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledIngest {
    pub contract_id: String,
    pub acceptable: usize,
    pub unacceptable: usize,
    pub already_present: usize,
    pub labeling: WeakLabeling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub labeled_revisions: usize,
    pub pending_revisions: usize,
    pub embeddings: usize,
    pub decisions: usize,
}

/// Changed provisions of `contract` as unlabeled revisions with id
/// `{contract}:{number}`. Tracked edits are resolved to their accepted text;
/// provisions matching the template (whitespace-normalized) are skipped.
pub fn extract_revisions(contract: &Contract, template: Option<&Contract>, created_at: DateTime<Utc>) -> Result<Vec<Revision>> {
    let mut out = Vec::new();
    for p in &contract.provisions {
        let text = detect_tracked_edits(&p.text)?.accepted_text.trim().to_string();
        if text.is_empty() {
            continue;
        }
        let reference = p
            .template_text
            .clone()
            .or_else(|| template.and_then(|t| t.provision(&p.number)).map(|t| t.template_text.clone().unwrap_or_else(|| t.text.clone())));
        if reference.is_some_and(|r| normalize_whitespace(&r) == normalize_whitespace(&text)) {
            continue;
        }
        out.push(Revision {
            id: format!("{}:{}", contract.id, p.number),
            provision_number: p.number.clone(),
            contract_id: contract.id.clone(),
            text,
            label: Label::Unlabeled,
            source: Source::Negotiated,
            created_at,
            pair_id: None,
        });
    }
    Ok(out)
}

fn template_texts(template: Option<&Contract>) -> HashMap<String, String> {
    template
        .map(|t| {
            t.provisions.iter().map(|p| (p.number.clone(), p.template_text.clone().unwrap_or_else(|| p.text.clone()))).collect()
        })
        .unwrap_or_default()
}

/// Contract with tracked edits resolved, for clause scoring.
fn accepted_view(contract: &Contract) -> Result<Contract> {
    let mut out = contract.clone();
    for p in &mut out.provisions {
        p.text = detect_tracked_edits(&p.text)?.accepted_text.trim().to_string();
    }
    Ok(out)
}

pub struct Engine {
    ws: Workspace,
    config: Config,
    providers: Providers,
    state: RwLock<State>,
    model: RwLock<Option<Arc<ServingModel>>>,
    retrain_lock: Mutex<()>,
}

impl Engine {
    /// Opens the workspace with providers built from `config`.
    pub fn open(ws: Workspace, config: Config) -> Result<Self> {
        let providers = Providers::from_config(&config)?;
        Self::with_providers(ws, config, providers)
    }

    pub fn with_providers(ws: Workspace, config: Config, providers: Providers) -> Result<Self> {
        config.validate()?;
        let store = PersistentStore::open(ws.store_files())?;
        let labeled: Vec<Revision> = ws.read_log(&ws.revisions_path())?;
        let labeled_ids = labeled.iter().map(|r| r.id.clone()).collect();
        let pending = ws.read_log::<Revision>(&ws.pending_path())?.into_iter().map(|r| (r.id.clone(), r)).collect();
        let flags = ws.read_log::<FlagRecord>(&ws.flags_path())?.into_iter().map(|f| (f.revision_id.clone(), f)).collect();
        let optimizations = ws
            .read_log::<OptimizationRecord>(&ws.optimizations_path())?
            .into_iter()
            .map(|o| (o.result.source_revision_id.clone(), o))
            .collect();
        let decisions = ws.read_log(&ws.decisions_path())?;
        let template = ws.load_template()?;
        let model = match ws.current_model()? {
            Some(p) => Some(Arc::new(ServingModel { version: p.version, model: ws.load_model(p.version)? })),
            None => None,
        };
        let engine = Self {
            state: RwLock::new(State { store, labeled, labeled_ids, pending, flags, optimizations, decisions, template }),
            model: RwLock::new(model),
            retrain_lock: Mutex::new(()),
            ws,
            config,
            providers,
        };
        engine.recover()?;
        Ok(engine)
    }

    /// Finishes decisions whose follow-up writes were cut short by a crash.
    fn recover(&self) -> Result<()> {
        let mut st = self.state.write().unwrap();
        let records = st.decisions.clone();
        for record in &records {
            self.apply_decision(&mut st, record)?;
        }
        Ok(())
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn model_snapshot(&self) -> Option<Arc<ServingModel>> {
        self.model.read().unwrap().clone()
    }

    fn require_model(&self) -> Result<Arc<ServingModel>> {
        self.model_snapshot().ok_or(ServiceError::NoModel)
    }

    pub fn counts(&self) -> StoreCounts {
        let st = self.state.read().unwrap();
        StoreCounts {
            labeled_revisions: st.labeled.len(),
            pending_revisions: st.pending.len(),
            embeddings: st.store.store().len(),
            decisions: st.decisions.len(),
        }
    }

    pub fn labeled(&self) -> Vec<Revision> {
        self.state.read().unwrap().labeled.clone()
    }

    pub fn store_snapshot(&self) -> VectorStore {
        self.state.read().unwrap().store.store().clone()
    }

    pub fn template(&self) -> Option<Contract> {
        self.state.read().unwrap().template.clone()
    }

    /// Text of every labeled and pending revision by id.
    pub fn texts(&self) -> HashMap<String, String> {
        let st = self.state.read().unwrap();
        st.labeled.iter().chain(st.pending.values()).map(|r| (r.id.clone(), r.text.clone())).collect()
    }

    pub fn decisions(&self) -> Vec<DecisionRecord> {
        self.state.read().unwrap().decisions.clone()
    }

    pub fn set_template(&self, template: &Contract) -> Result<()> {
        template.validate()?;
        let mut st = self.state.write().unwrap();
        self.ws.save_template(template)?;
        st.template = Some(template.clone());
        Ok(())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(embed_texts(self.providers.embedder.as_ref(), texts)?)
    }

    fn predict_all(&self, model: &ServingModel, revisions: &[Revision], vectors: &[EmbeddingVector]) -> Result<Vec<RevisionPrediction>> {
        let margin = self.config.ambiguity_margin;
        revisions
            .iter()
            .zip(vectors)
            .map(|(r, v)| {
                let prediction = predict(&model.model, v)?;
                Ok(RevisionPrediction {
                    revision_id: r.id.clone(),
                    provision_number: r.provision_number.clone(),
                    text: r.text.clone(),
                    flagged: is_flagged(prediction.probability_acceptable, margin),
                    prediction,
                })
            })
            .collect()
    }

    fn flag_for(&self, r: &RevisionPrediction, contract_id: &str, version: u64) -> FlagRecord {
        FlagRecord {
            revision_id: r.revision_id.clone(),
            contract_id: contract_id.to_string(),
            provision_number: r.provision_number.clone(),
            probability_acceptable: r.prediction.probability_acceptable,
            confidence_band: band_of(r.prediction.probability_acceptable, self.config.ambiguity_margin),
            status: FlagStatus::Open,
            model_version: version,
        }
    }

    fn report(&self, contract_id: &str, model: &ServingModel, predictions: Vec<RevisionPrediction>) -> ClassifyReport {
        let mut flags: Vec<FlagRecord> =
            predictions.iter().filter(|p| p.flagged).map(|p| self.flag_for(p, contract_id, model.version)).collect();
        sort_flags(&mut flags);
        ClassifyReport {
            contract_id: contract_id.to_string(),
            model_version: model.version,
            flagged_ids: flags.iter().map(|f| f.revision_id.clone()).collect(),
            flags,
            predictions,
        }
    }

    /// Classifies a contract's changed provisions without persisting anything.
    pub fn classify_contract(&self, contract: &Contract) -> Result<ClassifyReport> {
        contract.validate()?;
        let model = self.require_model()?;
        let revisions = extract_revisions(contract, self.template().as_ref(), Utc::now())?;
        let predictions = if revisions.is_empty() {
            Vec::new()
        } else {
            let vectors = self.embed(&revisions.iter().map(|r| r.text.clone()).collect::<Vec<_>>())?;
            self.predict_all(&model, &revisions, &vectors)?
        };
        Ok(self.report(&contract.id, &model, predictions))
    }

    /// Stores a contract for review, classifies its changed provisions and
    /// opens flags. Re-sending an identical contract returns its current flags.
    pub fn ingest_contract(&self, contract: &Contract) -> Result<IngestResponse> {
        contract.validate()?;
        validate_id(&contract.id)?;
        let model = self.require_model()?;
        let mut st = self.state.write().unwrap();

        if let Some(existing) = self.ws.load_contract(&contract.id)? {
            if existing != *contract {
                return Err(ServiceError::Conflict(format!("contract {} already exists with different content", contract.id)));
            }
            let revisions = st.pending.values().filter(|r| r.contract_id == contract.id).count();
            let flags = Self::contract_flags(&st, &contract.id, false);
            return Ok(IngestResponse { contract_id: contract.id.clone(), model_version: model.version, revisions, flags });
        }

        let revisions = extract_revisions(contract, st.template.as_ref(), Utc::now())?;
        let mut vectors = Vec::with_capacity(revisions.len());
        let missing: Vec<String> =
            revisions.iter().filter(|r| !st.store.store().contains(&r.id)).map(|r| r.text.clone()).collect();
        let mut fresh = if missing.is_empty() { Vec::new() } else { self.embed(&missing)? }.into_iter();
        let mut new_records = Vec::new();
        for r in &revisions {
            match st.store.store().get(&r.id) {
                Some(rec) => vectors.push(rec.vector.clone()),
                None => {
                    let v = fresh.next().expect("one vector per missing text");
                    new_records.push(EmbeddingRecord {
                        revision_id: r.id.clone(),
                        vector: v.clone(),
                        label: Label::Unlabeled,
                        provision_number: r.provision_number.clone(),
                    });
                    vectors.push(v);
                }
            }
        }
        let predictions = self.predict_all(&model, &revisions, &vectors)?;
        let report = self.report(&contract.id, &model, predictions);

        // The contract file goes last: a crash before it leaves a retryable ingest.
        self.ws.append_log(&self.ws.pending_path(), &revisions)?;
        st.store.append(new_records)?;
        self.ws.append_log(&self.ws.flags_path(), &report.flags)?;
        self.ws.save_contract(contract)?;

        for r in revisions {
            st.pending.insert(r.id.clone(), r);
        }
        for f in &report.flags {
            st.flags.insert(f.revision_id.clone(), f.clone());
        }
        Ok(IngestResponse {
            contract_id: contract.id.clone(),
            model_version: model.version,
            revisions: report.predictions.len(),
            flags: report.flags,
        })
    }

    fn contract_flags(st: &State, contract_id: &str, include_decided: bool) -> Vec<FlagRecord> {
        let mut flags: Vec<FlagRecord> = st
            .flags
            .values()
            .filter(|f| f.contract_id == contract_id && (include_decided || f.status != FlagStatus::Decided))
            .cloned()
            .collect();
        sort_flags(&mut flags);
        flags
    }

    pub fn flags(&self, contract_id: &str, include_decided: bool) -> Result<Vec<FlagRecord>> {
        validate_id(contract_id).map_err(|_| ServiceError::NotFound(format!("contract {contract_id}")))?;
        let st = self.state.read().unwrap();
        let known = st.pending.values().any(|r| r.contract_id == contract_id) || self.ws.load_contract(contract_id)?.is_some();
        if !known {
            return Err(ServiceError::NotFound(format!("contract {contract_id}")));
        }
        Ok(Self::contract_flags(&st, contract_id, include_decided))
    }

    pub fn revision_detail(&self, id: &str) -> Result<RevisionDetail> {
        let st = self.state.read().unwrap();
        let revision = st
            .pending
            .get(id)
            .or_else(|| st.labeled.iter().find(|r| r.id == id))
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("revision {id}")))?;
        let reference = st.template.as_ref().and_then(|t| t.provision(&revision.provision_number));
        let template_text = reference.map(|p| p.template_text.clone().unwrap_or_else(|| p.text.clone()));
        Ok(RevisionDetail {
            provision_title: reference.map(|p| p.title.clone()),
            diff: template_text.as_deref().map(|t| diff_words(t, &revision.text)),
            template_text,
            flag: st.flags.get(id).cloned(),
            optimization: st.optimizations.get(id).cloned(),
            decisions: st.decisions.iter().filter(|d| d.decision.revision_id == id).cloned().collect(),
            revision,
        })
    }

    /// Best-of-N rewrite of a pending revision, rewarded by the serving model.
    /// Unflagged revisions need `override_unflagged`.
    pub fn optimize_revision(&self, id: &str, override_unflagged: bool) -> Result<OptimizationRecord> {
        let model = self.require_model()?;
        let (revision, vector, pool, contract) = {
            let st = self.state.read().unwrap();
            let revision = st.pending.get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("pending revision {id}")))?;
            if !st.flags.contains_key(id) && !override_unflagged {
                return Err(ServiceError::Conflict(format!("revision {id} is not flagged; pass override to optimize anyway")));
            }
            let vector = st
                .store
                .store()
                .get(id)
                .map(|r| r.vector.clone())
                .ok_or_else(|| ServiceError::NotFound(format!("embedding for {id}")))?;
            let superseded = st.superseded();
            let training: Vec<Revision> = st.labeled.iter().filter(|r| !superseded.contains(&r.id)).cloned().collect();
            let pool = DemoPool::build(&training, st.store.store(), &template_texts(st.template.as_ref()))?;
            let contract = self.ws.load_contract(&revision.contract_id)?;
            (revision, vector, pool, contract)
        };

        let opt = &self.config.optimization;
        let mut related = Vec::new();
        if opt.include_related_clauses {
            if let Some(contract) = contract {
                let view = accepted_view(&contract)?;
                if let Some(target) = view.provision(&revision.provision_number) {
                    let deps = related_clauses(self.providers.scorer.as_ref(), &view, target, opt.related_threshold, None)?;
                    related = deps
                        .iter()
                        .filter_map(|d| view.provision(&d.target_number).map(|p| p.text.clone()))
                        .filter(|t| !t.is_empty())
                        .collect();
                }
            }
        }
        let reward = ClassifierReward { model: &model.model, embedder: self.providers.embedder.as_ref() };
        let query = OptimizationQuery { revision_id: id.to_string(), text: revision.text.clone(), vector, related_clauses: related };
        let result = optimize(self.providers.llm.as_ref(), &reward, &pool, &query, opt)?;
        let record = OptimizationRecord { model_version: model.version, created_at: Utc::now(), result };

        let mut st = self.state.write().unwrap();
        self.ws.append_log(&self.ws.optimizations_path(), std::slice::from_ref(&record))?;
        st.optimizations.insert(id.to_string(), record.clone());
        if let Some(flag) = st.flags.get(id).cloned() {
            if flag.status == FlagStatus::Open {
                let flag = FlagRecord { status: FlagStatus::Optimized, ..flag };
                self.ws.append_log(&self.ws.flags_path(), std::slice::from_ref(&flag))?;
                st.flags.insert(id.to_string(), flag);
            }
        }
        Ok(record)
    }

    /// Optimizes every undecided flag of a contract in id order. Per-revision
    /// failures are collected; success rates use the serving model at 0.5,
    /// with failed revisions counted by their original text.
    pub fn optimize_contract(&self, contract_id: &str) -> Result<BatchReport> {
        let mut flags = self.flags(contract_id, false)?;
        flags.sort_by(|a, b| a.revision_id.cmp(&b.revision_id));
        let mut report = BatchReport {
            contract_id: contract_id.to_string(),
            results: Vec::new(),
            failures: Vec::new(),
            success_rate_before: None,
            success_rate_after: None,
        };
        if flags.is_empty() {
            return Ok(report);
        }
        let model = self.require_model()?;
        let originals: Vec<String> = {
            let st = self.state.read().unwrap();
            flags.iter().map(|f| st.pending[&f.revision_id].text.clone()).collect()
        };
        let reward = ClassifierReward { model: &model.model, embedder: self.providers.embedder.as_ref() };
        let before = reward.rewards(&originals)?;
        let mut after = before.clone();
        for (i, flag) in flags.iter().enumerate() {
            match self.optimize_revision(&flag.revision_id, false) {
                Ok(record) => {
                    after[i] = record.result.chosen().reward;
                    report.results.push(record.result);
                }
                Err(ServiceError::Core(e @ CoreError::ProviderUnavailable(_))) => return Err(e.into()),
                Err(e) => report.failures.push(BatchFailure {
                    revision_id: flag.revision_id.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
        let rate = |v: &[f64]| v.iter().filter(|&&p| p >= 0.5).count() as f64 / v.len() as f64;
        report.success_rate_before = Some(rate(&before));
        report.success_rate_after = Some(rate(&after));
        Ok(report)
    }

    /// Records a reviewer verdict. The decision line is synced before any
    /// other write, and the call returns only after every write is synced.
    pub fn decide(&self, id: &str, request: DecisionRequest) -> Result<DecisionResponse> {
        let mut st = self.state.write().unwrap();
        let revision = st.pending.get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("pending revision {id}")))?;
        let flag = st.flags.get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("no flag for revision {id}")))?;
        if flag.status == FlagStatus::Decided && !request.force {
            return Err(ServiceError::Conflict(format!("revision {id} is already decided; pass force to override")));
        }
        let decision = ReviewDecision {
            revision_id: id.to_string(),
            verdict: request.verdict,
            final_text: request.final_text.clone(),
            reviewer: request.reviewer.clone(),
            decided_at: Utc::now(),
        };
        decision.validate()?;
        if request.candidate_index.is_some() && request.verdict != Verdict::Accept {
            return Err(ServiceError::Validation("candidate_index is only allowed with Accept".into()));
        }
        let (label, text) = match request.verdict {
            Verdict::Accept => {
                let optimization = st.optimizations.get(id);
                match (request.candidate_index, optimization) {
                    (Some(i), Some(o)) => {
                        let c = o.result.candidates.get(i).ok_or_else(|| {
                            ServiceError::Validation(format!("candidate_index {i} out of range (have {})", o.result.candidates.len()))
                        })?;
                        (Label::Acceptable, c.text.clone())
                    }
                    (Some(_), None) => return Err(ServiceError::Validation(format!("revision {id} has no optimization candidates"))),
                    (None, Some(o)) => (Label::Acceptable, o.result.chosen().text.clone()),
                    (None, None) => (Label::Acceptable, revision.text.clone()),
                }
            }
            Verdict::Edit => (Label::Acceptable, request.final_text.clone().unwrap_or_default().trim().to_string()),
            Verdict::Reject => (Label::Unacceptable, revision.text.clone()),
        };
        let n = st.decisions.iter().filter(|d| d.decision.revision_id == id).count() + 1;
        let record = DecisionRecord {
            decision,
            candidate_index: request.candidate_index,
            appended_revision_id: format!("{id}:decision-{n}"),
            appended_label: label,
            appended_text: text,
        };
        self.ws.append_log(&self.ws.decisions_path(), std::slice::from_ref(&record))?;
        st.decisions.push(record.clone());
        self.apply_decision(&mut st, &record)?;
        Ok(DecisionResponse { flag: st.flags[id].clone(), labeled_count: st.labeled.len(), record })
    }

    /// Idempotent follow-up writes of a logged decision.
    fn apply_decision(&self, st: &mut State, record: &DecisionRecord) -> Result<()> {
        let id = &record.decision.revision_id;
        let Some(pending) = st.pending.get(id).cloned() else {
            log::warn!("decision for unknown revision {id} ignored");
            return Ok(());
        };
        let new_id = &record.appended_revision_id;
        if !st.labeled_ids.contains(new_id) {
            let revision = Revision {
                id: new_id.clone(),
                provision_number: pending.provision_number.clone(),
                contract_id: pending.contract_id.clone(),
                text: record.appended_text.clone(),
                label: record.appended_label,
                source: Source::Negotiated,
                created_at: record.decision.decided_at,
                pair_id: None,
            };
            self.ws.append_log(&self.ws.revisions_path(), std::slice::from_ref(&revision))?;
            st.labeled_ids.insert(new_id.clone());
            st.labeled.push(revision);
        }
        if !st.store.store().contains(new_id) {
            let vector = self.embed(std::slice::from_ref(&record.appended_text))?.remove(0);
            st.store.append(vec![EmbeddingRecord {
                revision_id: new_id.clone(),
                vector,
                label: record.appended_label,
                provision_number: pending.provision_number.clone(),
            }])?;
        }
        if let Some(flag) = st.flags.get(id).cloned() {
            if flag.status != FlagStatus::Decided {
                let flag = FlagRecord { status: FlagStatus::Decided, ..flag };
                self.ws.append_log(&self.ws.flags_path(), std::slice::from_ref(&flag))?;
                st.flags.insert(id.clone(), flag);
            }
        }
        Ok(())
    }

    fn decisions_since_snapshot(&self, st: &State) -> Result<usize> {
        let at = self.ws.current_model()?.map_or(0, |p| p.decisions_at_snapshot);
        Ok(st.decisions.len().saturating_sub(at))
    }

    /// Trains a new model version on the labeled store and swaps it in.
    /// Without `force`, waits for the configured number of new decisions.
    pub fn retrain(&self, force: bool) -> Result<RetrainOutcome> {
        let _guard = self.retrain_lock.lock().unwrap();
        let (records, decisions, since) = {
            let st = self.state.read().unwrap();
            let since = self.decisions_since_snapshot(&st)?;
            let superseded = st.superseded();
            let records: Vec<EmbeddingRecord> = st
                .store
                .store()
                .records()
                .iter()
                .filter(|r| r.label.is_labeled() && !superseded.contains(&r.revision_id))
                .cloned()
                .collect();
            (records, st.decisions.len(), since)
        };
        let required = self.config.retrain_min_decisions;
        if !force && since < required {
            return Ok(RetrainOutcome::Skipped {
                reason: format!("{since} new decisions since the last snapshot, {required} required"),
                decisions_since_snapshot: since,
                required,
            });
        }
        let model = train_ensemble(&records, &self.config.classifier)?;
        let previous = self.model_snapshot().map(|m| m.version);
        let version = self.ws.latest_model_version()?.max(previous.unwrap_or(0)) + 1;
        self.ws.save_model(version, &model)?;
        self.ws.set_current(ModelPointer { version, decisions_at_snapshot: decisions })?;
        let metrics = model.metrics.clone();
        *self.model.write().unwrap() = Some(Arc::new(ServingModel { version, model }));
        log::info!("model v{version} trained on {} records", records.len());
        Ok(RetrainOutcome::Trained {
            version,
            previous_version: previous,
            decisions_since_snapshot: since,
            training_records: records.len(),
            metrics,
        })
    }

    pub fn model_info(&self) -> Result<ModelInfo> {
        let model = self.require_model()?;
        let since = self.decisions_since_snapshot(&self.state.read().unwrap())?;
        Ok(ModelInfo {
            version: model.version,
            model_id: model.model.model_id.clone(),
            k: model.model.k(),
            dim: model.model.dim,
            metrics: model.model.metrics.clone(),
            decisions_since_snapshot: since,
        })
    }

    /// Classifies free texts against one model snapshot.
    pub fn classify_texts(&self, texts: &[String]) -> Result<(u64, Vec<Prediction>)> {
        let model = self.require_model()?;
        let vectors = self.embed(texts)?;
        let predictions = vectors.iter().map(|v| predict(&model.model, v)).collect::<revkit_core::Result<Vec<_>>>()?;
        Ok((model.version, predictions))
    }

    /// Weak-labels a negotiated contract against the template and appends the
    /// results to the labeled store. Revisions already present are skipped.
    pub fn ingest_labeled(&self, contract: &Contract, created_at: DateTime<Utc>) -> Result<LabeledIngest> {
        contract.validate()?;
        validate_id(&contract.id)?;
        let template = self
            .template()
            .ok_or_else(|| ServiceError::Validation("no template in workspace; pass --template".into()))?;
        let labeling = weak_label_at(contract, &template, created_at);
        let fresh: Vec<Revision> = {
            let st = self.state.read().unwrap();
            labeling.revisions.iter().filter(|r| !st.labeled_ids.contains(&r.id)).cloned().collect()
        };
        let already_present = labeling.revisions.len() - fresh.len();
        self.append_labeled(fresh, None)?;
        self.ws.save_contract(contract)?;
        let count = |l: Label| labeling.revisions.iter().filter(|r| r.label == l).count();
        Ok(LabeledIngest {
            contract_id: contract.id.clone(),
            acceptable: count(Label::Acceptable),
            unacceptable: count(Label::Unacceptable),
            already_present,
            labeling,
        })
    }

    /// Appends labeled revisions and their embeddings. Vectors are computed
    /// when not supplied.
    pub fn append_labeled(&self, revisions: Vec<Revision>, vectors: Option<Vec<EmbeddingVector>>) -> Result<usize> {
        if revisions.is_empty() {
            return Ok(0);
        }
        for r in &revisions {
            r.validate()?;
            if !r.label.is_labeled() {
                return Err(ServiceError::Validation(format!("revision {} has no label", r.id)));
            }
        }
        let vectors = match vectors {
            Some(v) if v.len() == revisions.len() => v,
            Some(_) => return Err(ServiceError::Validation("one vector per revision required".into())),
            None => self.embed(&revisions.iter().map(|r| r.text.clone()).collect::<Vec<_>>())?,
        };
        let mut st = self.state.write().unwrap();
        let mut seen = HashSet::new();
        if let Some(dup) = revisions.iter().find(|r| st.labeled_ids.contains(&r.id) || !seen.insert(r.id.clone())) {
            return Err(CoreError::DuplicateId(dup.id.clone()).into());
        }
        let records: Vec<EmbeddingRecord> = revisions
            .iter()
            .zip(vectors)
            .filter(|(r, _)| !st.store.store().contains(&r.id))
            .map(|(r, v)| EmbeddingRecord { revision_id: r.id.clone(), vector: v, label: r.label, provision_number: r.provision_number.clone() })
            .collect();
        self.ws.append_log(&self.ws.revisions_path(), &revisions)?;
        st.store.append(records)?;
        let n = revisions.len();
        for r in revisions {
            st.labeled_ids.insert(r.id.clone());
            st.labeled.push(r);
        }
        Ok(n)
    }

    /// Embeds labeled and pending revisions missing from the vector store.
    pub fn embed_missing(&self) -> Result<usize> {
        let mut st = self.state.write().unwrap();
        let missing: Vec<Revision> =
            st.labeled.iter().chain(st.pending.values()).filter(|r| !st.store.store().contains(&r.id)).cloned().collect();
        if missing.is_empty() {
            return Ok(0);
        }
        let vectors = self.embed(&missing.iter().map(|r| r.text.clone()).collect::<Vec<_>>())?;
        let records: Vec<EmbeddingRecord> = missing
            .iter()
            .zip(vectors)
            .map(|(r, v)| EmbeddingRecord { revision_id: r.id.clone(), vector: v, label: r.label, provision_number: r.provision_number.clone() })
            .collect();
        let n = records.len();
        st.store.append(records)?;
        Ok(n)
    }
}
