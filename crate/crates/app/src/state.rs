//! Analysis state: the snapshot bundle, current signature generation,
//! findings and retune history, persisted as plain files in a directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use netsig_core::detectors::{run_detector, DetectError, DetectorConfig, Finding, Method};
use netsig_core::encoder::{EncodeError, SCHEMA_VERSION};
use netsig_core::eval::{compute_metrics, EvalMetrics, GroundTruth};
use netsig_core::ingest::{load_snapshot, validate_snapshot, Diagnostic, IngestError};
use netsig_core::pipeline::AnalysisBundle;
use netsig_core::report::{build_sankey, cluster_counts, ClusterCounts, Sankey};
use netsig_core::retune::{apply_retune, LogError, RetuneAction, RetuneError, RetuneLog};
use netsig_core::severity::{apply_severity, rank, RankMode, SeverityError, SeverityWeights};
use netsig_core::signatures::{mine_signatures, MiningParams, SignatureError, SignatureSet};

pub const SIGNATURES_FILE: &str = "signatures.json";
pub const FINDINGS_FILE: &str = "findings.jsonl";
pub const RETUNE_FILE: &str = "retune.jsonl";
pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Severity(#[from] SeverityError),
    #[error(transparent)]
    Retune(#[from] RetuneError),
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("retune needs signature findings; this state was analyzed with the {0} detector")]
    NotRetunable(Method),
    #[error("{0}")]
    Invalid(String),
}

pub fn read_file(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|source| AppError::Io { path: path.to_owned(), source })
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    let io = |source| AppError::Io { path: path.to_owned(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| AppError::Format { path: path.to_owned(), message: e.to_string() })
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("state values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub devices: usize,
    pub properties: usize,
    pub findings: usize,
    pub signatures: usize,
    pub violated_signatures: usize,
    pub unclustered: usize,
    pub dangling_references: usize,
}

/// Everything needed to reproduce a run from its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub snapshot: PathBuf,
    pub snapshot_id: String,
    pub schema_version: u32,
    pub seed: u64,
    pub detector: DetectorConfig,
    pub mining: MiningParams,
    pub severity: SeverityWeights,
    pub base_generation: u64,
    pub generation: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    pub counts: RunCounts,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub detector: DetectorConfig,
    pub mining: MiningParams,
    pub severity: SeverityWeights,
    pub truth: Option<PathBuf>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            detector: DetectorConfig::default(),
            mining: MiningParams::default(),
            severity: SeverityWeights::default(),
            truth: None,
        }
    }
}

fn canonical(path: &Path) -> Result<PathBuf, AppError> {
    path.canonicalize().map_err(|source| AppError::Io { path: path.to_owned(), source })
}

#[derive(Debug, Serialize)]
struct FindingsHeader<'a> {
    config: &'a DetectorConfig,
    generation: u64,
    rank: RankMode,
    schema_version: u32,
    severity: &'a SeverityWeights,
}

#[derive(Debug)]
pub struct Session {
    pub manifest: RunManifest,
    pub bundle: AnalysisBundle,
    pub set: SignatureSet,
    pub log: RetuneLog,
    /// Severity-ranked.
    pub findings: Vec<Finding>,
    pub truth: Option<GroundTruth>,
    pub diagnostics: Vec<Diagnostic>,
}

fn derive_findings(bundle: &AnalysisBundle, set: &SignatureSet, manifest: &RunManifest) -> Result<Vec<Finding>, AppError> {
    let mut findings = run_detector(&manifest.detector, bundle, Some(set))?;
    apply_severity(&mut findings, &bundle.graph, &manifest.severity)?;
    Ok(rank(findings, RankMode::Severity, &manifest.severity)?)
}

impl Session {
    /// Ingests, mines and detects from scratch.
    pub fn analyze(snapshot_dir: &Path, opts: AnalyzeOptions) -> Result<Session, AppError> {
        opts.detector.validate()?;
        opts.mining.validate()?;
        opts.severity.validate()?;
        let snapshot_path = canonical(snapshot_dir)?;
        let snapshot = load_snapshot(&snapshot_path)?;
        let mut diagnostics = snapshot.ingest_warnings.clone();
        diagnostics.extend(validate_snapshot(&snapshot));
        let truth_path = opts.truth.as_deref().map(canonical).transpose()?;
        let truth = truth_path.as_deref().map(load_truth).transpose()?;
        let bundle = AnalysisBundle::build(snapshot)?;
        let set = mine_signatures(&bundle.corpus, &opts.mining)?;
        let mut manifest = RunManifest {
            tool: "netsig".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: "analyze".into(),
            snapshot: snapshot_path,
            snapshot_id: bundle.snapshot.snapshot_id.clone(),
            schema_version: SCHEMA_VERSION,
            seed: opts.mining.seed,
            detector: opts.detector,
            mining: opts.mining,
            severity: opts.severity,
            base_generation: set.generation,
            generation: set.generation,
            truth: truth_path,
            counts: RunCounts {
                devices: 0,
                properties: 0,
                findings: 0,
                signatures: 0,
                violated_signatures: 0,
                unclustered: 0,
                dangling_references: 0,
            },
            warnings: set.warnings.clone(),
        };
        let findings = derive_findings(&bundle, &set, &manifest)?;
        manifest.counts = counts(&bundle, &set, &findings);
        let log = RetuneLog::new(set.generation);
        Ok(Session { manifest, bundle, set, log, findings, truth, diagnostics })
    }

    /// Reloads a state directory written by `save`.
    pub fn load(state_dir: &Path) -> Result<Session, AppError> {
        let manifest: RunManifest = read_json(&state_dir.join(MANIFEST_FILE))?;
        let snapshot = load_snapshot(&manifest.snapshot)?;
        if snapshot.snapshot_id != manifest.snapshot_id {
            return Err(AppError::Invalid(format!(
                "snapshot {} changed since analysis (id {} != {})",
                manifest.snapshot.display(),
                snapshot.snapshot_id,
                manifest.snapshot_id
            )));
        }
        let mut diagnostics = snapshot.ingest_warnings.clone();
        diagnostics.extend(validate_snapshot(&snapshot));
        let sig_path = state_dir.join(SIGNATURES_FILE);
        let set = SignatureSet::from_json(&read_file(&sig_path)?)
            .map_err(|e| AppError::Format { path: sig_path.clone(), message: e.to_string() })?;
        let log_path = state_dir.join(RETUNE_FILE);
        let log = RetuneLog::from_jsonl(&read_file(&log_path)?).map_err(|source| AppError::Log { path: log_path, source })?;
        let truth = manifest.truth.as_deref().map(load_truth).transpose()?;
        let bundle = AnalysisBundle::build(snapshot)?;
        let findings = derive_findings(&bundle, &set, &manifest)?;
        Ok(Session { manifest, bundle, set, log, findings, truth, diagnostics })
    }

    pub fn save(&self, state_dir: &Path) -> Result<(), AppError> {
        write_file(&state_dir.join(SIGNATURES_FILE), &self.set.to_json())?;
        write_file(&state_dir.join(FINDINGS_FILE), &self.findings_jsonl())?;
        write_file(&state_dir.join(RETUNE_FILE), &self.log.to_jsonl())?;
        write_file(&state_dir.join(MANIFEST_FILE), &to_pretty_json(&self.manifest))
    }

    pub fn findings_jsonl(&self) -> String {
        let header = FindingsHeader {
            config: &self.manifest.detector,
            generation: self.set.generation,
            rank: RankMode::Severity,
            schema_version: self.set.schema_version,
            severity: &self.manifest.severity,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for f in &self.findings {
            let _ = writeln!(out, "{}", serde_json::to_string(f).expect("findings serialize"));
        }
        out
    }

    pub fn generation(&self) -> u64 {
        self.set.generation
    }

    /// Applies one action. On error the session is unchanged.
    pub fn apply(&mut self, action: RetuneAction) -> Result<(), AppError> {
        if self.manifest.detector.method != Method::Signature {
            return Err(AppError::NotRetunable(self.manifest.detector.method));
        }
        let next = apply_retune(&self.set, &action, &self.bundle.corpus)?;
        let findings = derive_findings(&self.bundle, &next, &self.manifest)?;
        self.set = next;
        self.findings = findings;
        self.log.actions.push(action);
        self.manifest.generation = self.set.generation;
        self.manifest.counts = counts(&self.bundle, &self.set, &self.findings);
        Ok(())
    }

    /// Findings in the requested order with ranks renumbered.
    pub fn ranked(&self, mode: RankMode) -> Vec<Finding> {
        match mode {
            RankMode::Severity => self.findings.clone(),
            RankMode::Outlier => rank(self.findings.clone(), RankMode::Outlier, &self.manifest.severity).expect("outlier ranking cannot fail"),
        }
    }

    /// Findings restricted to labeled properties when a truth file is loaded.
    pub fn labeled_findings(&self) -> Vec<Finding> {
        match &self.truth {
            Some(t) => self.findings.iter().filter(|f| t.labels.contains_key(&f.property_id)).cloned().collect(),
            None => self.findings.clone(),
        }
    }

    pub fn sankey(&self) -> Sankey {
        build_sankey(&self.labeled_findings())
    }

    pub fn metrics(&self) -> Option<EvalMetrics> {
        self.truth.as_ref().map(|t| compute_metrics(&self.findings, t))
    }

    pub fn cluster_counts(&self) -> ClusterCounts {
        cluster_counts(&self.set, &self.findings)
    }
}

fn counts(bundle: &AnalysisBundle, set: &SignatureSet, findings: &[Finding]) -> RunCounts {
    let cc = cluster_counts(set, findings);
    RunCounts {
        devices: bundle.snapshot.devices.len(),
        properties: bundle.properties.len(),
        findings: findings.len(),
        signatures: cc.signatures,
        violated_signatures: cc.violated,
        unclustered: set.unclustered().len(),
        dangling_references: bundle.graph.dangling.len(),
    }
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, AppError> {
    GroundTruth::from_json(&read_file(path)?).map_err(|e| AppError::Format { path: path.to_owned(), message: e.to_string() })
}
