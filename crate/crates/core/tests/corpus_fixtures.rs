use std::path::PathBuf;

use revkit_core::corpus::{
    detect_tracked_edits, parse_contract, segment_plain_text, weak_label_at, Contract, Format, Label, Source,
};

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

fn t0() -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap()
}

#[test]
fn twelve_section_template_in_order() {
    let raw = fixture("template_service.txt");
    let c = parse_contract(&raw, Format::PlainText).unwrap();
    let numbers: Vec<&str> = c.provisions.iter().map(|p| p.number.as_str()).collect();
    assert_eq!(numbers, vec!["1", "2", "3", "4", "5", "6", "7", "7.1", "7.2", "8", "9", "10"]);
    assert_eq!(c.provision("7.1").unwrap().title, "Payment Terms");
    assert!(c.provision("7.1").unwrap().text.contains("within 60 days"));
    assert_eq!(format!("{:?}", c.kind), "Service");
    // Same text, same id.
    assert_eq!(parse_contract(&raw, Format::PlainText).unwrap().id, c.id);
}

#[test]
fn segmentation_reassembles_source() {
    let raw = fixture("template_service.txt");
    let seg = segment_plain_text(&raw).unwrap();
    assert_eq!(seg.reassemble(), raw);
    assert_eq!(seg.sections.len(), 12);
}

#[test]
fn weak_labeling_fixture_counts() {
    let template: Contract = parse_contract(&fixture("template_purchase.json"), Format::Structured).unwrap();
    let negotiated = parse_contract(&fixture("negotiated_purchase.json"), Format::Structured).unwrap();
    let out = weak_label_at(&negotiated, &template, t0());
    let count = |l: Label| out.revisions.iter().filter(|r| r.label == l).count();
    assert_eq!(count(Label::Unacceptable), 4);
    assert_eq!(count(Label::Acceptable), 3);
    assert_eq!(out.revisions.len(), 7);
    assert!(out.skipped.is_empty());
    assert!(out.revisions.iter().all(|r| r.source == Source::Negotiated && r.contract_id == "neg-001"));

    let mut unacceptable: Vec<&str> =
        out.revisions.iter().filter(|r| r.label == Label::Unacceptable).map(|r| r.provision_number.as_str()).collect();
    unacceptable.sort();
    assert_eq!(unacceptable, vec!["1", "2", "4", "6"]);
    let payment = out.revisions.iter().find(|r| r.provision_number == "4").unwrap();
    assert_eq!(payment.text, "Buyer shall pay undisputed invoices within 15 days of receipt.");
    for r in &out.revisions {
        assert!(!detect_tracked_edits(&r.text).unwrap().has_edits);
    }
    // Deterministic and idempotent.
    assert_eq!(weak_label_at(&negotiated, &template, t0()), out);
}
