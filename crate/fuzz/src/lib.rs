//! Fuzz entry points. Each takes raw bytes, must never panic, and asserts
//! the round-trip property of its format when the input parses.
//!
//! The app crate's `fuzz_seeds` test runs the checked-in corpus through these
//! same functions on stable.

use netsig::service::RetuneRequest;
use netsig_core::eval::{generate, CorpusSpec};
use netsig_core::ingest;
use netsig_core::retune::RetuneLog;
use netsig_core::severity::SeverityWeights;
use netsig_core::signatures::{MiningParams, SignatureSet};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

/// Printing a parsed config and parsing it again is a fixpoint.
pub fn parse_config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(d) = ingest::parse_config(s, "fuzz") {
        let printed = d.print();
        let again = ingest::parse_config(&printed, "fuzz").expect("printed config reparses");
        assert_eq!(again.print(), printed);
    }
}

pub fn parse_json_device(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(d) = ingest::parse_json_device(s, "fuzz") {
        let printed = d.print();
        assert!(ingest::parse_config(&printed, "fuzz").is_ok(), "JSON device prints to unparseable text:\n{printed}");
    }
}

pub fn signature_set(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(set) = SignatureSet::from_json(s) {
        let out = set.to_json();
        assert_eq!(SignatureSet::from_json(&out).expect("own output parses").to_json(), out);
    }
}

pub fn retune_log(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(log) = RetuneLog::from_jsonl(s) {
        let out = log.to_jsonl();
        assert_eq!(RetuneLog::from_jsonl(&out).expect("own output parses"), log);
    }
}

/// Specs small enough to generate quickly are generated; that must succeed
/// or fail cleanly.
pub fn corpus_spec(data: &[u8]) {
    let Ok(spec) = serde_json::from_slice::<CorpusSpec>(data) else { return };
    if spec.validate().is_ok() && spec.node_count <= 8 && spec.total_properties() <= 400 {
        let _ = generate(&spec);
    }
}

pub fn severity_weights(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(w) = SeverityWeights::from_toml(s) {
        assert!(w.validate().is_ok());
    }
}

pub fn mining_params(data: &[u8]) {
    if let Ok(p) = serde_json::from_slice::<MiningParams>(data) {
        let _ = p.validate();
    }
}

pub fn retune_request(data: &[u8]) {
    if let Ok(req) = serde_json::from_slice::<RetuneRequest>(data) {
        let generation = req.generation;
        assert_eq!(req.into_action().generation, generation);
    }
}

/// Entry points by target name, in `fuzz_targets/` order.
pub const TARGETS: &[(&str, fn(&[u8]))] = &[
    ("parse_config", parse_config),
    ("parse_json_device", parse_json_device),
    ("signature_set", signature_set),
    ("retune_log", retune_log),
    ("corpus_spec", corpus_spec),
    ("severity_weights", severity_weights),
    ("mining_params", mining_params),
    ("retune_request", retune_request),
];
