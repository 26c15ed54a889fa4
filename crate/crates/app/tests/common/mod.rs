#![allow(dead_code)]

use std::path::{Path, PathBuf};

use netsig::state::{AnalyzeOptions, Session};
use netsig_core::eval::{generate, CorpusSpec};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub snapshot: PathBuf,
    pub truth: PathBuf,
}

impl Fixture {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

/// A small labeled corpus written to a temp dir.
pub fn fixture(node_count: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec { node_count, seed, ..CorpusSpec::default() };
    let g = generate(&spec).unwrap();
    let snapshot = dir.path().join("snapshot");
    g.write_configs(&snapshot).unwrap();
    let truth = dir.path().join("truth.json");
    std::fs::write(&truth, g.truth.to_json()).unwrap();
    Fixture { dir, snapshot, truth }
}

pub fn analyzed(fx: &Fixture) -> Session {
    Session::analyze(&fx.snapshot, AnalyzeOptions { truth: Some(fx.truth.clone()), ..Default::default() }).unwrap()
}

pub fn netsig(args: &[&str]) -> i32 {
    netsig::cli::run(std::iter::once("netsig").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
