//! Outlier detectors: the signature detector and three statistical baselines.
//!
//! Baselines score every numeric feature of every kind as an independent
//! series over the whole kind population. A property is flagged when any of
//! its features exceeds the method threshold.

pub mod gmm;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{feature_schema, DeviationCategory, EncodedCorpus};
use crate::grammar::AclRule;
use crate::graph::ReferenceGraph;
use crate::pipeline::AnalysisBundle;
use crate::properties::{Property, PropertyId, PropertyKind};
use crate::signatures::{deviations, format_value, SignatureError, SignatureId, SignatureSet};
use crate::stats;

pub use gmm::{fit_gmm, score_gmm, GmmModel};

/// Consistency constant of the modified z-score.
pub const MODZ_SCALE: f64 = 0.6745;
/// Stand-in for an infinite modified z-score in serialized findings.
pub const SCORE_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Signature,
    Zscore,
    ModifiedZscore,
    Gmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Zscore, Method::ModifiedZscore, Method::Gmm, Method::Signature];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Signature => "signature",
            Method::Zscore => "zscore",
            Method::ModifiedZscore => "modified_zscore",
            Method::Gmm => "gmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "signature" => Ok(Method::Signature),
            "zscore" | "z" => Ok(Method::Zscore),
            "modified_zscore" | "modified-zscore" | "modz" => Ok(Method::ModifiedZscore),
            "gmm" => Ok(Method::Gmm),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub method: Method,
    pub zscore_threshold: f64,
    pub modz_threshold: f64,
    pub gmm_components: usize,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub gmm_outlier_percentile: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            method: Method::Signature,
            zscore_threshold: 3.0,
            modz_threshold: 3.5,
            gmm_components: 3,
            gmm_max_iters: 200,
            gmm_tol: 1e-6,
            gmm_outlier_percentile: 5.0,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn with_method(method: Method) -> Self {
        DetectorConfig { method, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::InvalidConfig(m.to_owned()));
        if !(self.zscore_threshold > 0.0 && self.zscore_threshold.is_finite()) {
            return bad("zscore_threshold must be positive");
        }
        if !(self.modz_threshold > 0.0 && self.modz_threshold.is_finite()) {
            return bad("modz_threshold must be positive");
        }
        if self.gmm_components == 0 {
            return bad("gmm_components must be at least 1");
        }
        if !(self.gmm_tol >= 0.0 && self.gmm_tol.is_finite()) {
            return bad("gmm_tol must be non-negative");
        }
        if !(self.gmm_outlier_percentile > 0.0 && self.gmm_outlier_percentile < 50.0) {
            return bad("gmm_outlier_percentile must lie in (0, 50)");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("series of length {0} is too short to score")]
    SeriesTooShort(usize),
    #[error("{rows} rows cannot support {components} mixture components")]
    TooFewRows { rows: usize, components: usize },
    #[error("vector width {found} does not match the model width {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("vectors use schema version {vectors}, signatures were mined under {set}")]
    GenerationMismatch { set: u32, vectors: u32 },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemType {
    UndefinedReference,
    DeviantAttributeValue,
    InconsistentAcrossDevices,
    ShadowedRule,
    Unknown,
}

impl ProblemType {
    pub const ALL: [ProblemType; 5] = [
        ProblemType::UndefinedReference,
        ProblemType::DeviantAttributeValue,
        ProblemType::InconsistentAcrossDevices,
        ProblemType::ShadowedRule,
        ProblemType::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemType::UndefinedReference => "UndefinedReference",
            ProblemType::DeviantAttributeValue => "DeviantAttributeValue",
            ProblemType::InconsistentAcrossDevices => "InconsistentAcrossDevices",
            ProblemType::ShadowedRule => "ShadowedRule",
            ProblemType::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ProblemType::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown problem type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviantFeature {
    pub feature: String,
    pub category: DeviationCategory,
    pub observed: String,
    pub expected: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub property_id: PropertyId,
    pub kind: PropertyKind,
    pub detector: Method,
    pub outlier_score: f64,
    /// Threshold the score was compared against.
    pub threshold: f64,
    pub violated_signature: Option<SignatureId>,
    pub deviant_features: Vec<DeviantFeature>,
    pub problem_type: ProblemType,
    pub severity: Option<f64>,
    pub rank: Option<usize>,
}

impl Finding {
    /// Category of the strongest deviant feature.
    pub fn primary_category(&self) -> Option<DeviationCategory> {
        self.deviant_features
            .iter()
            .fold(None, |best: Option<&DeviantFeature>, d| match best {
                Some(b) if b.deviation >= d.deviation => Some(b),
                _ => Some(d),
            })
            .map(|d| d.category)
    }
}

/// `|x - mean| / stddev` with population stddev; all zero for a constant series.
pub fn score_zscore(values: &[f64]) -> Result<Vec<f64>, DetectError> {
    if values.len() < 2 {
        return Err(DetectError::SeriesTooShort(values.len()));
    }
    let m = stats::mean(values).unwrap_or(0.0);
    let sd = stats::stddev(values).unwrap_or(0.0);
    Ok(values.iter().map(|x| if sd == 0.0 { 0.0 } else { (x - m).abs() / sd }).collect())
}

/// `0.6745 |x - median| / MAD`. When MAD is 0, values off the median score +inf.
pub fn score_modified_zscore(values: &[f64]) -> Result<Vec<f64>, DetectError> {
    if values.len() < 2 {
        return Err(DetectError::SeriesTooShort(values.len()));
    }
    let med = stats::median(values).unwrap_or(0.0);
    let mad = stats::mad(values).unwrap_or(0.0);
    Ok(values
        .iter()
        .map(|x| {
            let dev = (x - med).abs();
            if mad == 0.0 {
                if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                MODZ_SCALE * dev / mad
            }
        })
        .collect())
}

/// Indices of ACL entries fully covered by an earlier entry with the opposite action.
pub fn shadowed_rules(rules: &[AclRule]) -> Vec<usize> {
    (0..rules.len())
        .filter(|&i| rules[..i].iter().any(|e| e.action != rules[i].action && e.covers(&rules[i])))
        .collect()
}

/// Same-name holders of each (kind, name) across devices.
fn holders(properties: &[Property]) -> HashMap<(PropertyKind, &str), Vec<&PropertyId>> {
    let mut out: HashMap<(PropertyKind, &str), Vec<&PropertyId>> = HashMap::new();
    for p in properties {
        out.entry((p.kind, p.name.as_str())).or_default().push(&p.id);
    }
    out
}

struct Classifier<'a> {
    graph: &'a ReferenceGraph,
    corpus: &'a EncodedCorpus,
    holders: HashMap<(PropertyKind, &'a str), Vec<&'a PropertyId>>,
}

impl<'a> Classifier<'a> {
    fn new(properties: &'a [Property], corpus: &'a EncodedCorpus, graph: &'a ReferenceGraph) -> Self {
        Classifier { graph, corpus, holders: holders(properties) }
    }

    /// A deviant categorical value not held by every device with a same-name property.
    fn inconsistent(&self, p: &Property, deviant: &[DeviantFeature]) -> bool {
        let Some(others) = self.holders.get(&(p.kind, p.name.as_str())) else { return false };
        if others.len() < 2 {
            return false;
        }
        let schema = feature_schema(p.kind);
        deviant.iter().any(|d| {
            let Some(slot) = schema.categorical_features().position(|f| f.name == d.feature) else { return false };
            others.iter().any(|o| {
                self.corpus.get(o).is_some_and(|v| self.corpus.token(v.categorical[slot]) != d.observed)
            })
        })
    }

    fn classify(&self, p: &Property, deviant: &[DeviantFeature]) -> ProblemType {
        if self.graph.has_dangling(&p.id) {
            ProblemType::UndefinedReference
        } else if p.kind == PropertyKind::Acl && !shadowed_rules(p.acl_rules()).is_empty() {
            ProblemType::ShadowedRule
        } else if self.inconsistent(p, deviant) {
            ProblemType::InconsistentAcrossDevices
        } else if !deviant.is_empty() {
            ProblemType::DeviantAttributeValue
        } else {
            ProblemType::Unknown
        }
    }
}

/// Signature detector. Findings are ordered by property id.
pub fn detect_signature_outliers(
    properties: &[Property],
    corpus: &EncodedCorpus,
    set: &SignatureSet,
    graph: &ReferenceGraph,
) -> Result<Vec<Finding>, DetectError> {
    if corpus.schema_version != set.schema_version {
        return Err(DetectError::GenerationMismatch { set: set.schema_version, vectors: corpus.schema_version });
    }
    let classifier = Classifier::new(properties, corpus, graph);
    let mut out = Vec::new();
    for p in properties {
        let Some(sid) = set.signature_of(&p.id) else { continue };
        let Some(sig) = set.get(sid) else { continue };
        if sig.suppressed.contains(&p.id) {
            continue;
        }
        let Some(v) = corpus.get(&p.id) else { continue };
        let deviant: Vec<DeviantFeature> = deviations(v, sig, corpus, &set.params)
            .into_iter()
            .filter(|d| !d.whitelisted && d.deviation > sig.threshold)
            .map(|d| DeviantFeature {
                feature: d.feature,
                category: d.category,
                observed: d.observed,
                expected: d.expected,
                deviation: d.deviation.min(SCORE_SENTINEL),
            })
            .collect();
        if deviant.is_empty() {
            continue;
        }
        let score = deviant.iter().map(|d| d.deviation).fold(0.0, f64::max);
        out.push(Finding {
            property_id: p.id.clone(),
            kind: p.kind,
            detector: Method::Signature,
            outlier_score: score,
            threshold: sig.threshold,
            violated_signature: Some(sid),
            problem_type: classifier.classify(p, &deviant),
            deviant_features: deviant,
            severity: None,
            rank: None,
        });
    }
    out.sort_by(|a, b| a.property_id.cmp(&b.property_id));
    Ok(out)
}

/// Scores for one numeric column plus the threshold they are compared to.
fn score_column(config: &DetectorConfig, col: &[f64]) -> Result<(Vec<f64>, f64, String), DetectError> {
    match config.method {
        Method::Zscore => {
            let s = score_zscore(col)?;
            let summary = format!(
                "mean {} stddev {}",
                format_value(stats::mean(col).unwrap_or(0.0)),
                format_value(stats::stddev(col).unwrap_or(0.0))
            );
            Ok((s, config.zscore_threshold, summary))
        }
        Method::ModifiedZscore => {
            let s = score_modified_zscore(col)?.into_iter().map(|x| x.min(SCORE_SENTINEL)).collect();
            let summary = format!(
                "median {} (MAD {})",
                format_value(stats::median(col).unwrap_or(0.0)),
                format_value(stats::mad(col).unwrap_or(0.0))
            );
            Ok((s, config.modz_threshold, summary))
        }
        Method::Gmm => {
            let rows: Vec<Vec<f64>> = col.iter().map(|&x| vec![x]).collect();
            let cfg = DetectorConfig { gmm_components: config.gmm_components.min(rows.len()), ..config.clone() };
            let model = fit_gmm(&rows, &cfg)?;
            let raw = score_gmm(&model, &rows)?;
            let cutoff = stats::percentile(&raw, 100.0 - config.gmm_outlier_percentile).unwrap_or(0.0);
            // shift so scores are non-negative; the flag decision is unchanged
            let floor = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let s = raw.iter().map(|x| x - floor).collect();
            let summary = format!("{} components, nll cutoff {:.4}", model.components(), cutoff);
            Ok((s, cutoff - floor, summary))
        }
        Method::Signature => unreachable!("signature method is not column-based"),
    }
}

fn run_baseline(config: &DetectorConfig, bundle: &AnalysisBundle) -> Result<Vec<Finding>, DetectError> {
    let classifier = Classifier::new(&bundle.properties, &bundle.corpus, &bundle.graph);
    // property → flagged features with the threshold each one crossed
    let mut flagged: BTreeMap<PropertyId, Vec<(DeviantFeature, f64)>> = BTreeMap::new();
    for kind in PropertyKind::ALL {
        let vectors: Vec<_> = bundle.corpus.of_kind(kind).collect();
        if vectors.len() < 2 {
            continue;
        }
        let schema = feature_schema(kind);
        for (i, f) in schema.numeric_features().enumerate() {
            let col: Vec<f64> = vectors.iter().map(|v| v.numeric[i]).collect();
            let (scores, threshold, summary) = score_column(config, &col)?;
            for ((v, s), x) in vectors.iter().zip(scores).zip(&col) {
                if s > threshold {
                    let d = DeviantFeature {
                        feature: f.name.to_owned(),
                        category: f.category,
                        observed: format_value(*x),
                        expected: summary.clone(),
                        deviation: s,
                    };
                    flagged.entry(v.property_id.clone()).or_default().push((d, threshold));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(flagged.len());
    for (id, features) in flagged {
        let p = bundle.property(&id).expect("vectors come from bundle properties");
        // the finding is governed by its strongest feature
        let (score, threshold) = features
            .iter()
            .map(|(d, t)| (d.deviation, *t))
            .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
        let deviant: Vec<DeviantFeature> = features.into_iter().map(|(d, _)| d).collect();
        out.push(Finding {
            property_id: id,
            kind: p.kind,
            detector: config.method,
            outlier_score: score,
            threshold,
            violated_signature: None,
            problem_type: classifier.classify(p, &deviant),
            deviant_features: deviant,
            severity: None,
            rank: None,
        });
    }
    Ok(out)
}

/// Runs the configured detector. The signature method needs a mined set.
pub fn run_detector(config: &DetectorConfig, bundle: &AnalysisBundle, set: Option<&SignatureSet>) -> Result<Vec<Finding>, DetectError> {
    config.validate()?;
    match config.method {
        Method::Signature => {
            let set = set.ok_or_else(|| DetectError::InvalidConfig("signature detector needs mined signatures".into()))?;
            detect_signature_outliers(&bundle.properties, &bundle.corpus, set, &bundle.graph)
        }
        _ => run_baseline(config, bundle),
    }
}
