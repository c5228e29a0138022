mod common;

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use revkit_core::corpus::Revision;
use revkit_core::jsonl;
use revkit_service::config::LlmSettings;
use revkit_service::{Config, Engine, Workspace};
use serde_json::Value;

fn revkit(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revkit"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env_remove("REVKIT_LLM_URL")
        .env_remove("REVKIT_EMBEDDING_URL")
        .env_remove("REVKIT_SCORER_URL")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON error in {text}"));
    serde_json::from_str(line).unwrap()
}

/// Runs ingest for the template and seed contracts, then trains v1.
fn seeded_workspace(dir: &Path, config: &Config) {
    let (template, seeds) = common::write_inputs(dir, config);
    for (i, seed) in seeds.iter().enumerate() {
        let mut args = vec!["ingest", "--contract", seed.to_str().unwrap()];
        if i == 0 {
            args.extend(["--template", template.to_str().unwrap()]);
        }
        stdout_json(&revkit(dir, &args));
    }
    let trained = stdout_json(&revkit(dir, &["train-classifier"]));
    assert_eq!(trained["status"], "trained");
    assert_eq!(trained["version"], 1);
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = revkit(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = revkit(dir.path(), &["classify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = revkit(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "ingest", "embed", "synth-generate", "synth-filter", "train-classifier", "classify", "retrieve", "optimize", "evaluate",
        "export-embeddings", "serve",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn evaluate_on_empty_store_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = revkit(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "EmptyStore");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"id\": \"x\", \"provisions\": []}").unwrap();
    let out = revkit(dir.path(), &["ingest", "--contract", bad.to_str().unwrap(), "--template", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "MalformedDocument");

    let unbalanced = dir.path().join("unbalanced.txt");
    std::fs::write(&unbalanced, "1. Payment\nBuyer shall pay within {--60 days.\n").unwrap();
    let tmpl = dir.path().join("t.json");
    std::fs::write(&tmpl, serde_json::to_string(&common::template()).unwrap()).unwrap();
    let out = revkit(dir.path(), &["ingest", "--contract", unbalanced.to_str().unwrap(), "--template", tmpl.to_str().unwrap()]);
    // Unbalanced markers skip the provision rather than failing the run.
    let body = stdout_json(&out);
    assert_eq!(body["labeling"]["skipped"].as_array().unwrap().len(), 1);

    std::fs::write(dir.path().join("config.json"), "{\"ambiguity_margin\": 3}").unwrap();
    let out = revkit(dir.path(), &["embed"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.json");
    std::fs::write(&c, serde_json::to_string(&common::review_contract("r")).unwrap()).unwrap();
    let out = revkit(dir.path(), &["classify", "--contract", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "NoModel");
}

#[test]
fn ingest_weak_labels_the_fixture_contract() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixture_dir();
    let out = revkit(
        dir.path(),
        &[
            "ingest",
            "--contract",
            fx.join("negotiated_purchase.json").to_str().unwrap(),
            "--template",
            fx.join("template_purchase.json").to_str().unwrap(),
        ],
    );
    let body = stdout_json(&out);
    assert_eq!((body["unacceptable"].as_u64(), body["acceptable"].as_u64()), (Some(4), Some(3)));
    let stored: Vec<Revision> = jsonl::read_jsonl(&dir.path().join("revisions.jsonl")).unwrap();
    assert_eq!(stored.len(), 7);
    // Re-ingesting is a no-op for the labeled store.
    let again = stdout_json(&revkit(
        dir.path(),
        &["ingest", "--contract", fx.join("negotiated_purchase.json").to_str().unwrap()],
    ));
    assert_eq!(again["already_present"], 7);
    let stored: Vec<Revision> = jsonl::read_jsonl(&dir.path().join("revisions.jsonl")).unwrap();
    assert_eq!(stored.len(), 7);
    let embed = stdout_json(&revkit(dir.path(), &["embed"]));
    assert_eq!(embed["embedded"], 0);
    assert_eq!(embed["counts"]["embeddings"], 7);
}

#[test]
fn classify_matches_api_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let config = common::test_config();
    seeded_workspace(&ws, &config);

    let contract = dir.path().join("review.json");
    std::fs::write(&contract, serde_json::to_string(&common::review_contract("rev-9")).unwrap()).unwrap();
    let flag_file = dir.path().join("flags.json");
    let out = stdout_json(&revkit(&ws, &["classify", "--contract", contract.to_str().unwrap(), "--out", flag_file.to_str().unwrap()]));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&flag_file).unwrap()).unwrap();
    assert_eq!(written["flagged_ids"], out["flagged_ids"]);
    let cli_ids: Vec<String> = serde_json::from_value(written["flagged_ids"].clone()).unwrap();
    assert!(!cli_ids.is_empty());
    // classify does not persist anything.
    assert!(!ws.join("pending.jsonl").exists());

    let engine = Engine::open(Workspace::open(&ws).unwrap(), config).unwrap();
    let api = engine.ingest_contract(&common::review_contract("rev-9")).unwrap();
    let api_ids: Vec<String> = api.flags.iter().map(|f| f.revision_id.clone()).collect();
    assert_eq!(api_ids, cli_ids);
    let cli_probs: Vec<f64> =
        written["flags"].as_array().unwrap().iter().map(|f| f["probability_acceptable"].as_f64().unwrap()).collect();
    let api_probs: Vec<f64> = api.flags.iter().map(|f| f.probability_acceptable).collect();
    assert_eq!(cli_probs, api_probs);
}

#[test]
fn classify_with_hand_set_model_flags_the_boundary_side() {
    use revkit_core::classifier::{EnsembleModel, HeadKind, LogisticHead, TrainConfig, TrainingSummary};
    use revkit_core::embedding::HashingEmbedder;
    use revkit_service::review::ModelPointer;

    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    ws.save_template(&common::template()).unwrap();
    // One head whose weights point along the embedding of the bad phrases.
    let embedder = HashingEmbedder::new(256);
    let direction = embedder.embed_one(&common::BAD.join(" ")).to_f64();
    let model = EnsembleModel {
        model_id: "hashing-unigram-256".into(),
        dim: 256,
        centroids: vec![direction.clone()],
        heads: vec![LogisticHead { weights: direction.iter().map(|w| -20.0 * w).collect(), bias: 6.0, kind: HeadKind::Trained }],
        train_config: TrainConfig { k: 1, ..Default::default() },
        metrics: TrainingSummary {
            train_count: 0,
            val_count: 0,
            cluster_sizes: vec![0],
            cluster_acceptable: vec![0],
            final_losses: vec![0.0],
            train_accuracy: 0.0,
            val_accuracy: None,
            cluster_val_accuracy: vec![None],
            kmeans_iterations: 0,
        },
    };
    ws.save_model(1, &model).unwrap();
    ws.set_current(ModelPointer { version: 1, decisions_at_snapshot: 0 }).unwrap();

    let contract = dir.path().join("review.json");
    std::fs::write(&contract, serde_json::to_string(&common::review_contract("hs")).unwrap()).unwrap();
    let out = stdout_json(&revkit(dir.path(), &["classify", "--contract", contract.to_str().unwrap()]));
    let mut ids: Vec<String> = serde_json::from_value(out["flagged_ids"].clone()).unwrap();
    ids.sort();
    assert_eq!(ids, ["hs:1", "hs:4", "hs:6"]);
    assert!(dir.path().join("flags/hs.json").exists());
}

#[test]
fn pipeline_commands_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let mut config = common::test_config();
    // Distinct replies so no two stored vectors coincide.
    let replies = common::template()
        .provisions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!("Acceptable Revision: {} In addition, {}\nUnacceptable Revision: {} In addition, {}", p.text, common::GOOD[i % 3], p.text, common::BAD[i % 3])
        })
        .collect();
    config.llm = LlmSettings::Scripted { replies };
    config.generation.generations_per_provision = 1;
    config.generation.max_in_flight = 1;
    config.generation.knn_k = 5;
    seeded_workspace(&ws, &config);

    let generated = stdout_json(&revkit(&ws, &["synth-generate", "--append"]));
    assert_eq!(generated["malformed"], 0);
    let kept = generated["kept"].as_u64().unwrap();
    assert!(kept > 0, "{generated}");
    assert_eq!(generated["appended"], kept);
    assert!(ws.join("synthetic/manifest.json").exists());

    // Filtering the kept set again keeps all of it; flipping labels discards all of it.
    let synthetic: Vec<Revision> = jsonl::read_jsonl(&ws.join("synthetic/revisions.jsonl")).unwrap();
    let flipped: Vec<Revision> = synthetic
        .iter()
        .map(|r| Revision {
            id: format!("{}:flip", r.id),
            label: match r.label {
                revkit_core::corpus::Label::Acceptable => revkit_core::corpus::Label::Unacceptable,
                _ => revkit_core::corpus::Label::Acceptable,
            },
            ..r.clone()
        })
        .collect();
    let flipped_path = dir.path().join("flipped.jsonl");
    jsonl::write_jsonl(&flipped_path, &flipped).unwrap();
    let filtered = stdout_json(&revkit(&ws, &["synth-filter", "--input", flipped_path.to_str().unwrap(), "--k", "5"]));
    assert_eq!(filtered["kept"], 0);
    assert_eq!(filtered["discarded"], flipped.len());

    let retrieved = stdout_json(&revkit(&ws, &["retrieve", "--revision", "seed-0:2", "--top-k", "3"]));
    let cands = retrieved["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    assert!(cands.iter().all(|c| c["id"] != "seed-0:2"));
    let reranked = stdout_json(&revkit(&ws, &["retrieve", "--text", common::BAD[1], "--rerank"]));
    assert_eq!(reranked["candidates"].as_array().unwrap().len(), config.rerank_keep);

    let report = stdout_json(&revkit(&ws, &["evaluate"]));
    assert_eq!(report["retrieval"]["self_retrieval"]["top_k_accuracy"]["1"], 1.0);
    assert!(report["classifier"]["report"]["accuracy"].as_f64().unwrap() > 0.8, "{report}");
    assert!(report["fid"]["fid"].as_f64().unwrap() >= 0.0);
    assert!(ws.join("reports/evaluate.json").exists());

    let export = dir.path().join("emb.jsonl");
    let exported = stdout_json(&revkit(&ws, &["export-embeddings", "--out", export.to_str().unwrap()]));
    assert_eq!(exported["exported"].as_u64().unwrap() as usize, 54 + kept as usize);

    // Optimization through the CLI persists its result.
    let engine = Arc::new(Engine::open(Workspace::open(&ws).unwrap(), common::test_config()).unwrap());
    engine.ingest_contract(&common::review_contract("rev-2")).unwrap();
    drop(engine);
    let mut optimize_config = common::test_config();
    optimize_config.generation = config.generation;
    std::fs::write(ws.join("config.json"), serde_json::to_string(&optimize_config).unwrap()).unwrap();
    let opt = stdout_json(&revkit(&ws, &["optimize", "--revision", "rev-2:1"]));
    assert_eq!(opt["result"]["source_revision_id"], "rev-2:1");
    let batch = stdout_json(&revkit(&ws, &["optimize", "--contract", "rev-2"]));
    assert!(batch["success_rate_after"].as_f64().unwrap() >= batch["success_rate_before"].as_f64().unwrap());
    let out = revkit(&ws, &["optimize", "--revision", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "NotFound");
}
