#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use revkit_core::corpus::{Contract, Provision};
use revkit_service::config::LlmSettings;
use revkit_service::{Config, Engine, Workspace};

pub const BAD: [&str; 3] = [
    "Seller may suspend performance at its sole discretion without notice.",
    "Seller disclaims all liability of any kind whatsoever.",
    "Buyer irrevocably waives all remedies and claims.",
];

pub const GOOD: [&str; 3] = [
    "Each party shall act in good faith and give reasonable written notice.",
    "The parties may agree mutual written amendments in good faith.",
    "Buyer may request reasonable documentation in writing.",
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn template() -> Contract {
    serde_json::from_str(&std::fs::read_to_string(fixture_dir().join("template_purchase.json")).unwrap()).unwrap()
}

fn with_text(template: &Contract, id: &str, text: impl Fn(&Provision) -> String) -> Contract {
    Contract {
        id: id.to_string(),
        kind: template.kind,
        provisions: template.provisions.iter().map(|p| Provision { text: text(p), ..p.clone() }).collect(),
    }
}

/// Six negotiated contracts. Unacceptable edits are tracked insertions of a
/// `BAD` sentence, acceptable ones silently append a `GOOD` sentence, and
/// every provision sees both labels across the set.
pub fn seed_contracts() -> Vec<Contract> {
    let t = template();
    (0..6)
        .map(|c| {
            with_text(&t, &format!("seed-{c}"), |p| {
                let n: usize = p.number.parse().unwrap();
                if (n + c).is_multiple_of(2) {
                    format!("{}{{++ {}++}}", p.text, BAD[(n + c) % 3])
                } else {
                    format!("{} {}", p.text, GOOD[(n + c) % 3])
                }
            })
        })
        .collect()
}

/// Contract under review: provisions 1, 4 and 6 carry unacceptable language,
/// 3 and 5 acceptable language, the rest match the template.
pub fn review_contract(id: &str) -> Contract {
    with_text(&template(), id, |p| match p.number.as_str() {
        "1" => format!("{} {}", p.text, BAD[0]),
        "4" => format!("Buyer shall pay undisputed invoices within {{--60--}}{{++15++}} days of receipt. {}", BAD[2]),
        "6" => format!("{} {}", p.text, BAD[1]),
        "3" => format!("{} {}", p.text, GOOD[0]),
        "5" => format!("{} {}", p.text, GOOD[2]),
        _ => p.text.clone(),
    })
}

pub const OPTIMIZED_REPLIES: [&str; 3] = [
    "Optimized Unacceptable Version: Seller shall deliver the goods in good faith and give reasonable written notice of any delay.",
    "Optimized Unacceptable Version: Seller may suspend performance at its sole discretion.",
    "Optimized Unacceptable Version: The parties may agree mutual written amendments in good faith.",
];

pub fn test_config() -> Config {
    let mut c = Config::default();
    c.classifier.k = 2;
    c.classifier.epochs = 300;
    c.classifier.learning_rate = 0.5;
    c.optimization.n_demonstrations = 3;
    c.optimization.best_of_n = 3;
    c.optimization.max_in_flight = 1;
    c.retrain_min_decisions = 5;
    c.llm = LlmSettings::Scripted { replies: OPTIMIZED_REPLIES.iter().map(|s| s.to_string()).collect() };
    c
}

pub fn fixed_time() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Writes config.json, template and seed contracts into `dir` and returns
/// the seed contract paths.
pub fn write_inputs(dir: &Path, config: &Config) -> (PathBuf, Vec<PathBuf>) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config).unwrap()).unwrap();
    let template_path = dir.join("template-in.json");
    std::fs::write(&template_path, serde_json::to_string(&template()).unwrap()).unwrap();
    let seeds = seed_contracts()
        .iter()
        .map(|c| {
            let path = dir.join(format!("{}.in.json", c.id));
            std::fs::write(&path, serde_json::to_string(c).unwrap()).unwrap();
            path
        })
        .collect();
    (template_path, seeds)
}

/// Engine over a workspace holding the weak-labeled seed contracts and a
/// trained model v1.
pub fn seeded_engine(dir: &Path, config: Config) -> Engine {
    let ws = Workspace::open(dir).unwrap();
    std::fs::write(ws.config_path(), serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let engine = Engine::open(ws, config).unwrap();
    engine.set_template(&template()).unwrap();
    for c in seed_contracts() {
        engine.ingest_labeled(&c, fixed_time()).unwrap();
    }
    engine.retrain(true).unwrap();
    engine
}
