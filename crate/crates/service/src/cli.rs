//! `revkit` command line.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use revkit_core::classifier::{evaluate_classifier, ClassifierReport};
use revkit_core::corpus::{parse_contract, Contract, Format, Label, Revision, Source};
use revkit_core::embedding::{embed_texts, EmbeddingRecord, EmbeddingVector, VectorStore};
use revkit_core::metrics::{export_embeddings, fid_datasets};
use revkit_core::retrieval::{evaluate_retrieval, rerank, retrieve_precedents, Candidate, EvalQuery, RetrievalReport};
use revkit_core::synthgen::{generate_dataset, knn_vote, write_dataset, Demonstration, KnnVote, Verdict};
use revkit_core::{jsonl, Error as CoreError};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::engine::Engine;
use crate::error::{Result, ServiceError};
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "revkit", version, about = "Contract revision flagging, precedent retrieval and rewriting")]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Config file; defaults to <workspace>/config.json.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    /// `.json` means structured, anything else plain text.
    Auto,
    Structured,
    PlainText,
}

#[derive(Debug, Args)]
pub struct DocArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weak-label a negotiated contract against the template into the labeled store.
    Ingest {
        #[arg(long)]
        contract: PathBuf,
        /// Template to store in the workspace before labeling.
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        doc: DocArgs,
    },
    /// Embed stored revisions that have no vector yet.
    Embed,
    /// Generate synthetic revision pairs with the configured LLM.
    SynthGenerate {
        /// JSONL of demonstrations; derived from the labeled store when omitted.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add kept revisions to the labeled store.
        #[arg(long)]
        append: bool,
    },
    /// kNN-filter a JSONL of labeled revisions against the real store.
    SynthFilter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        append: bool,
    },
    /// Train a new classifier version on the labeled store.
    TrainClassifier {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify a contract's changed provisions and write a flag file.
    Classify {
        #[arg(long)]
        contract: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        doc: DocArgs,
    },
    /// Nearest labeled precedents for a text or stored revision.
    Retrieve {
        #[arg(long, conflicts_with = "revision", required_unless_present = "revision")]
        text: Option<String>,
        #[arg(long)]
        revision: Option<String>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        rerank: bool,
    },
    /// Rewrite one flagged revision, or every open flag of a contract.
    Optimize {
        #[arg(long, conflicts_with = "contract", required_unless_present = "contract")]
        revision: Option<String>,
        #[arg(long)]
        contract: Option<String>,
        /// Optimize even when the revision is not flagged.
        #[arg(long = "override")]
        override_unflagged: bool,
    },
    /// Classifier, retrieval and FID report over the workspace.
    Evaluate {
        /// JSONL of labeled revisions held out for classifier evaluation.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write every stored vector to a JSONL file.
    ExportEmbeddings {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP API. The bearer token comes from REVKIT_API_TOKEN.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn read_doc(path: &Path, format: FormatArg) -> Result<Contract> {
    let format = match format {
        FormatArg::Structured => Format::Structured,
        FormatArg::PlainText => Format::PlainText,
        FormatArg::Auto if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Format::Structured,
        FormatArg::Auto => Format::PlainText,
    };
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_contract(&raw, format)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(jsonl::write_atomic(path, &bytes)?)
}

fn read_revisions(path: &Path) -> Result<Vec<Revision>> {
    if !path.exists() {
        return Err(ServiceError::Validation(format!("{} does not exist", path.display())));
    }
    Ok(jsonl::read_jsonl(path)?)
}

/// Pairs each provision's unacceptable and acceptable labeled revisions in id order.
fn demos_from_store(labeled: &[Revision], template: &Contract) -> Vec<Demonstration> {
    let mut by_provision: HashMap<&str, (Vec<&Revision>, Vec<&Revision>)> = HashMap::new();
    for r in labeled {
        let slot = by_provision.entry(&r.provision_number).or_default();
        match r.label {
            Label::Acceptable => slot.0.push(r),
            Label::Unacceptable => slot.1.push(r),
            Label::Unlabeled => {}
        }
    }
    let mut out = Vec::new();
    for p in &template.provisions {
        let Some((good, bad)) = by_provision.get_mut(p.number.as_str()) else { continue };
        good.sort_by(|a, b| a.id.cmp(&b.id));
        bad.sort_by(|a, b| a.id.cmp(&b.id));
        for (g, b) in good.iter().zip(bad.iter()) {
            out.push(Demonstration {
                provision_number: p.number.clone(),
                provision: p.template_text.clone().unwrap_or_else(|| p.text.clone()),
                acceptable: g.text.clone(),
                unacceptable: b.text.clone(),
            });
        }
    }
    out
}

/// Store restricted to labeled records of non-generated revisions.
fn real_store(engine: &Engine) -> Result<VectorStore> {
    let real: std::collections::HashSet<String> = engine
        .labeled()
        .into_iter()
        .filter(|r| !matches!(r.source, Source::Synthetic | Source::Paraphrase))
        .map(|r| r.id)
        .collect();
    let store = engine.store_snapshot();
    Ok(VectorStore::from_records(store.records().iter().filter(|r| real.contains(&r.revision_id)).cloned())?)
}

#[derive(Serialize)]
struct FilterRow {
    revision_id: String,
    label: Label,
    vote: KnnVote,
}

#[derive(Serialize)]
struct EvaluationReport {
    store_size: usize,
    labeled_records: usize,
    classifier: Option<ClassifierSection>,
    retrieval: RetrievalSection,
    fid: Option<FidSection>,
}

#[derive(Serialize)]
struct ClassifierSection {
    model_version: u64,
    /// True when no held-out file was given and the training store was scored.
    in_sample: bool,
    report: ClassifierReport,
}

#[derive(Serialize)]
struct RetrievalSection {
    /// Each labeled record queried with its own vector.
    self_retrieval: RetrievalReport,
    /// Own record hidden; only provision accuracy is meaningful here.
    leave_one_out_provision_accuracy: f64,
}

#[derive(Serialize)]
struct FidSection {
    real: usize,
    synthetic: usize,
    fid: f64,
}

fn evaluate(engine: &Engine, test: Option<&Path>) -> Result<EvaluationReport> {
    let store = engine.store_snapshot();
    if store.is_empty() {
        return Err(CoreError::EmptyStore.into());
    }
    let labeled: Vec<&EmbeddingRecord> = store.records().iter().filter(|r| r.label.is_labeled()).collect();
    if labeled.is_empty() {
        return Err(CoreError::EmptyStore.into());
    }

    let classifier = match engine.model_snapshot() {
        None => None,
        Some(model) => {
            let (records, in_sample) = match test {
                Some(path) => {
                    let revisions: Vec<Revision> =
                        read_revisions(path)?.into_iter().filter(|r| r.label.is_labeled()).collect();
                    if revisions.is_empty() {
                        return Err(CoreError::EmptyTestSet.into());
                    }
                    let texts: Vec<String> = revisions.iter().map(|r| r.text.clone()).collect();
                    let vectors = embed_texts(engine.providers().embedder.as_ref(), &texts)?;
                    let records = revisions
                        .iter()
                        .zip(vectors)
                        .map(|(r, v)| EmbeddingRecord {
                            revision_id: r.id.clone(),
                            vector: v,
                            label: r.label,
                            provision_number: r.provision_number.clone(),
                        })
                        .collect::<Vec<_>>();
                    (records, false)
                }
                None => (labeled.iter().map(|r| (*r).clone()).collect(), true),
            };
            Some(ClassifierSection {
                model_version: model.version,
                in_sample,
                report: evaluate_classifier(&model.model, &records)?,
            })
        }
    };

    let labeled_store = VectorStore::from_records(labeled.iter().map(|r| (*r).clone()))?;
    let queries: Vec<EvalQuery> = labeled
        .iter()
        .map(|r| EvalQuery { vector: r.vector.clone(), text: None, gold_id: r.revision_id.clone(), exclude_id: None })
        .collect();
    let self_retrieval = evaluate_retrieval(&labeled_store, &queries, &[1, 5, 10])?;
    let leave_one_out = if labeled.len() > 1 {
        let held: Vec<EvalQuery> =
            queries.iter().map(|q| EvalQuery { exclude_id: Some(q.gold_id.clone()), ..q.clone() }).collect();
        evaluate_retrieval(&labeled_store, &held, &[1])?.provision_accuracy
    } else {
        0.0
    };

    let sources: HashMap<String, Source> = engine.labeled().into_iter().map(|r| (r.id, r.source)).collect();
    let (mut real, mut synthetic): (Vec<EmbeddingVector>, Vec<EmbeddingVector>) = (Vec::new(), Vec::new());
    for r in &labeled {
        match sources.get(&r.revision_id) {
            Some(Source::Synthetic | Source::Paraphrase) => synthetic.push(r.vector.clone()),
            Some(_) => real.push(r.vector.clone()),
            None => {}
        }
    }
    let fid = if real.len() >= 2 && synthetic.len() >= 2 {
        Some(FidSection { real: real.len(), synthetic: synthetic.len(), fid: fid_datasets(&real, &synthetic, false)? })
    } else {
        None
    };

    Ok(EvaluationReport {
        store_size: store.len(),
        labeled_records: labeled.len(),
        classifier,
        retrieval: RetrievalSection { self_retrieval, leave_one_out_provision_accuracy: leave_one_out },
        fid,
    })
}

fn retrieve(engine: &Engine, text: Option<String>, revision: Option<String>, top_k: Option<usize>, use_rerank: bool) -> Result<Value> {
    let store = engine.store_snapshot();
    let texts = engine.texts();
    let (query_id, query_text, vector) = match (text, revision) {
        (_, Some(id)) => {
            let rec = store.get(&id).ok_or_else(|| ServiceError::NotFound(format!("revision {id}")))?;
            let text = texts.get(&id).cloned().unwrap_or_default();
            (id, text, rec.vector.clone())
        }
        (Some(t), None) => {
            let v = embed_texts(engine.providers().embedder.as_ref(), std::slice::from_ref(&t))?.remove(0);
            (String::new(), t, v)
        }
        (None, None) => return Err(ServiceError::Validation("pass --text or --revision".into())),
    };
    let depth = top_k.unwrap_or(engine.config().retrieval_depth);
    let labeled_only = VectorStore::from_records(store.records().iter().filter(|r| r.label.is_labeled()).cloned())?;
    let hits = retrieve_precedents(&labeled_only, &query_id, &vector, depth)?;
    let mut candidates: Vec<Candidate> = hits
        .iter()
        .map(|h| Candidate {
            id: h.record.revision_id.clone(),
            text: texts.get(&h.record.revision_id).cloned().unwrap_or_default(),
            score: h.score,
        })
        .collect();
    if use_rerank && !candidates.is_empty() {
        let keep = engine.config().rerank_keep.min(candidates.len());
        candidates = rerank(engine.providers().scorer.as_ref(), &query_text, candidates, keep)?;
    }
    let rows: Vec<Value> = candidates
        .iter()
        .map(|c| {
            let rec = labeled_only.get(&c.id);
            json!({
                "id": c.id,
                "score": c.score,
                "label": rec.map(|r| r.label),
                "provision_number": rec.map(|r| r.provision_number.clone()),
                "text": c.text,
            })
        })
        .collect();
    Ok(json!({ "query": query_text, "reranked": use_rerank, "candidates": rows }))
}

fn run_command(cli: Cli) -> Result<Value> {
    let ws = Workspace::open(&cli.workspace)?;
    let config_path = cli.config.clone().unwrap_or_else(|| ws.config_path());
    let mut config = Config::load(&config_path)?;
    if let Command::TrainClassifier { k, seed } = &cli.command {
        if let Some(k) = k {
            config.classifier.k = *k;
        }
        if let Some(seed) = seed {
            config.classifier.seed = *seed;
        }
    }
    let engine = Engine::open(ws.clone(), config)?;
    let out = match cli.command {
        Command::Ingest { contract, template, doc } => {
            if let Some(t) = template {
                engine.set_template(&read_doc(&t, doc.format)?)?;
            }
            let contract = read_doc(&contract, doc.format)?;
            serde_json::to_value(engine.ingest_labeled(&contract, Utc::now())?)?
        }
        Command::Embed => json!({ "embedded": engine.embed_missing()?, "counts": engine.counts() }),
        Command::SynthGenerate { demos, out, append } => {
            let template = engine.template().ok_or_else(|| ServiceError::Validation("workspace has no template".into()))?;
            let demos: Vec<Demonstration> = match demos {
                Some(path) => jsonl::read_jsonl(&path)?,
                None => demos_from_store(&engine.labeled(), &template),
            };
            let real = real_store(&engine)?;
            let outcome = generate_dataset(
                engine.providers().llm.as_ref(),
                engine.providers().embedder.as_ref(),
                &template.provisions,
                &demos,
                &engine.config().generation,
                &real,
                Utc::now(),
            )?;
            let dir = out.unwrap_or_else(|| ws.root().join("synthetic"));
            write_dataset(&dir, &outcome)?;
            let appended =
                if append { engine.append_labeled(outcome.kept.clone(), Some(outcome.kept_vectors.clone()))? } else { 0 };
            json!({
                "out": dir,
                "kept": outcome.kept.len(),
                "discarded": outcome.discarded_count,
                "malformed": outcome.malformed_count,
                "failed": outcome.failed_count,
                "appended": appended,
            })
        }
        Command::SynthFilter { input, out, k, append } => {
            let revisions: Vec<Revision> = read_revisions(&input)?;
            if revisions.is_empty() {
                return Err(CoreError::EmptySet.into());
            }
            let k = k.unwrap_or(engine.config().generation.knn_k);
            let real = real_store(&engine)?;
            let texts: Vec<String> = revisions.iter().map(|r| r.text.clone()).collect();
            let vectors = embed_texts(engine.providers().embedder.as_ref(), &texts)?;
            let mut rows = Vec::new();
            let (mut kept, mut kept_vectors) = (Vec::new(), Vec::new());
            for (r, v) in revisions.iter().zip(vectors) {
                let vote = knn_vote(r.label, &v, &real, k)?;
                if vote.verdict == Verdict::Keep {
                    kept.push(r.clone());
                    kept_vectors.push(v);
                }
                rows.push(FilterRow { revision_id: r.id.clone(), label: r.label, vote });
            }
            let path = out.unwrap_or_else(|| ws.root().join("synthetic").join("filtered.jsonl"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            jsonl::write_jsonl(&path, &kept)?;
            let kept_count = kept.len();
            let appended = if append { engine.append_labeled(kept, Some(kept_vectors))? } else { 0 };
            json!({ "out": path, "kept": kept_count, "discarded": rows.len() - kept_count, "appended": appended, "votes": rows })
        }
        Command::TrainClassifier { .. } => serde_json::to_value(engine.retrain(true)?)?,
        Command::Classify { contract, out, doc } => {
            let contract = read_doc(&contract, doc.format)?;
            let report = engine.classify_contract(&contract)?;
            let path = out.unwrap_or_else(|| ws.root().join("flags").join(format!("{}.json", contract.id)));
            write_json(&path, &report)?;
            json!({ "out": path, "contract_id": report.contract_id, "model_version": report.model_version, "flagged_ids": report.flagged_ids })
        }
        Command::Retrieve { text, revision, top_k, rerank } => retrieve(&engine, text, revision, top_k, rerank)?,
        Command::Optimize { revision, contract, override_unflagged } => match (revision, contract) {
            (Some(id), _) => serde_json::to_value(engine.optimize_revision(&id, override_unflagged)?)?,
            (None, Some(contract)) => serde_json::to_value(engine.optimize_contract(&contract)?)?,
            (None, None) => return Err(ServiceError::Validation("pass --revision or --contract".into())),
        },
        Command::Evaluate { test, out } => {
            let report = evaluate(&engine, test.as_deref())?;
            let path = out.unwrap_or_else(|| ws.root().join("reports").join("evaluate.json"));
            write_json(&path, &report)?;
            serde_json::to_value(report)?
        }
        Command::ExportEmbeddings { out } => {
            let n = export_embeddings(&engine.store_snapshot(), &out)?;
            json!({ "out": out, "exported": n })
        }
        Command::Serve { addr } => {
            let token = std::env::var("REVKIT_API_TOKEN").ok().filter(|t| !t.is_empty());
            if token.is_none() {
                log::warn!("REVKIT_API_TOKEN is unset; the API accepts unauthenticated requests");
            }
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(crate::api::serve(Arc::new(engine), token, &addr))?;
            json!({ "stopped": true })
        }
    };
    Ok(out)
}

/// Parses `args`, runs the command, and returns the process exit status:
/// 0 on success, 2 for usage or validation errors, 1 for runtime errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(cli) {
        Ok(value) => {
            let text = serde_json::to_string_pretty(&value).expect("JSON values serialize");
            // A closed pipe (e.g. `| head`) is not a failure of the command.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
