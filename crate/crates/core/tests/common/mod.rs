#![allow(dead_code)]

use std::path::PathBuf;

use netsig_core::eval::{generate_corpus, CorpusSpec, GroundTruth};
use netsig_core::ingest::{load_snapshot, NetworkSnapshot};
use netsig_core::pipeline::AnalysisBundle;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_snapshot() -> NetworkSnapshot {
    load_snapshot(&fixtures().join("snapshot")).unwrap()
}

pub fn fixture_bundle() -> AnalysisBundle {
    AnalysisBundle::build(fixture_snapshot()).unwrap()
}

pub fn corpus(node_count: usize, seed: u64) -> (AnalysisBundle, GroundTruth) {
    let (snap, truth) = generate_corpus(&CorpusSpec { node_count, seed, ..CorpusSpec::default() }).unwrap();
    (AnalysisBundle::build(snap).unwrap(), truth)
}

/// Compares against a committed golden file. `NETSIG_BLESS=1` rewrites it.
pub fn golden(name: &str, actual: &str) {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("NETSIG_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e} (run with NETSIG_BLESS=1)", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}
