//! Side-by-side detector evaluation on one labeled corpus.

use std::fmt::Write as _;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::corpusgen::{GroundTruth, Label};
use super::metrics::{compute_metrics, EvalMetrics};
use crate::detectors::{run_detector, DetectError, DetectorConfig, Finding, Method};
use crate::pipeline::AnalysisBundle;
use crate::retune::{recompute, replay, ReplayError, RetuneAction, RetuneLog, RetuneOp};
use crate::signatures::{mine_signatures, MiningParams, SignatureError, SignatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRun {
    pub name: String,
    pub config: DetectorConfig,
    /// Apply the scripted retune session before scoring.
    #[serde(default)]
    pub retune: bool,
}

impl DetectorRun {
    pub fn plain(method: Method) -> Self {
        DetectorRun { name: method.to_string(), config: DetectorConfig::with_method(method), retune: false }
    }

    /// The five standard rows: three baselines, signature, signature with retune.
    pub fn standard(seed: u64) -> Vec<DetectorRun> {
        let mut runs: Vec<DetectorRun> = Method::ALL.into_iter().map(DetectorRun::plain).collect();
        runs.push(DetectorRun { name: "signature+retune".into(), config: DetectorConfig::with_method(Method::Signature), retune: true });
        for r in &mut runs {
            r.config.seed = seed;
        }
        runs
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("retune is only defined for the signature detector")]
    RetuneNeedsSignature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub detector: String,
    #[serde(flatten)]
    pub metrics: Option<EvalMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub configs: Vec<DetectorRun>,
}

impl ComparisonTable {
    pub fn row(&self, name: &str) -> Option<&EvalMetrics> {
        self.rows.iter().find(|r| r.detector == name).and_then(|r| r.metrics.as_ref())
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.detector.len()).max().unwrap_or(8).max(8);
        let mut out = format!(
            "{:<w$}  {:>6}  {:>6}  {:>6}  {:>9}  {:>9}  {:>8}  {:>8}\n",
            "detector", "TP", "FP", "FN", "precision", "recall", "emitted", "labeled"
        );
        for r in &self.rows {
            match &r.metrics {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "{:<w$}  {:>6}  {:>6}  {:>6}  {:>9}  {:>9}  {:>8}  {:>8}",
                        r.detector,
                        m.tp,
                        m.fp,
                        m.fn_,
                        m.precision.to_string(),
                        m.recall.to_string(),
                        m.emitted_findings,
                        m.labeled_findings
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<w$}  failed: {}", r.detector, r.error.as_deref().unwrap_or("unknown error"));
                }
            }
        }
        out
    }
}

/// A session that suppresses every flagged property labeled clean, one
/// action per finding, in property-id order.
pub fn scripted_retune_log(set: &SignatureSet, findings: &[Finding], truth: &GroundTruth) -> RetuneLog {
    let mut log = RetuneLog::new(set.generation);
    for f in findings {
        let (Some(sig), Label::Clean) = (f.violated_signature, truth.label(&f.property_id)) else { continue };
        log.actions.push(RetuneAction {
            generation: set.generation + log.actions.len() as u64,
            action: RetuneOp::SuppressFinding { property: f.property_id.clone(), signature: sig },
            author: "scripted".into(),
            timestamp: DateTime::UNIX_EPOCH,
            note: Some("labeled clean".into()),
        });
    }
    log
}

fn run_one(run: &DetectorRun, bundle: &AnalysisBundle, truth: &GroundTruth, params: &MiningParams) -> Result<EvalMetrics, EvalError> {
    if run.config.method != Method::Signature {
        if run.retune {
            return Err(EvalError::RetuneNeedsSignature);
        }
        return Ok(compute_metrics(&run_detector(&run.config, bundle, None)?, truth));
    }
    let set = mine_signatures(&bundle.corpus, params)?;
    let findings = run_detector(&run.config, bundle, Some(&set))?;
    if !run.retune {
        return Ok(compute_metrics(&findings, truth));
    }
    let log = scripted_retune_log(&set, &findings, truth);
    let tuned = replay(&log, &set, &bundle.corpus)?;
    Ok(compute_metrics(&recompute(bundle, &tuned)?, truth))
}

/// One row per run. A failing run is reported in its row, not raised.
pub fn compare_detectors(bundle: &AnalysisBundle, truth: &GroundTruth, runs: &[DetectorRun], params: &MiningParams) -> ComparisonTable {
    let rows = runs
        .iter()
        .map(|r| match run_one(r, bundle, truth, params) {
            Ok(m) => ComparisonRow { detector: r.name.clone(), metrics: Some(m), error: None },
            Err(e) => ComparisonRow { detector: r.name.clone(), metrics: None, error: Some(e.to_string()) },
        })
        .collect();
    ComparisonTable { rows, configs: runs.to_vec() }
}
