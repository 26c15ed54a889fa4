//! Operator retuning of a signature set, event-sourced.
//!
//! Every action names the generation it was built against. Applying it to
//! any other generation fails with `StaleGeneration`, so two writers racing
//! on the same generation cannot both win.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{detect_signature_outliers, DetectError, Finding};
use crate::encoder::{feature_schema, EncodedCorpus, FeatureVector};
use crate::pipeline::AnalysisBundle;
use crate::properties::PropertyId;
use crate::signatures::{compute_stats, SignatureId, SignatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RetuneOp {
    MergeSignatures { a: SignatureId, b: SignatureId },
    AdjustThreshold { signature: SignatureId, threshold: f64 },
    WhitelistValue { signature: SignatureId, feature: String, value: String },
    SuppressFinding { property: PropertyId, signature: SignatureId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetuneAction {
    /// Generation the action was built against.
    pub generation: u64,
    pub action: RetuneOp,
    pub author: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RetuneAction {
    pub fn new(generation: u64, action: RetuneOp, author: &str) -> Self {
        RetuneAction { generation, action, author: author.to_owned(), timestamp: Utc::now(), note: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RetuneError {
    #[error("unknown signature {0}")]
    UnknownSignature(SignatureId),
    #[error("cannot merge {a} and {b}: different property kinds")]
    KindMismatch { a: SignatureId, b: SignatureId },
    #[error("action built against generation {action}, current generation is {current}")]
    StaleGeneration { action: u64, current: u64 },
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("signature {signature} has no feature `{feature}`")]
    UnknownFeature { signature: SignatureId, feature: String },
    #[error("`{property}` is not a member of signature {signature}")]
    NotAMember { property: PropertyId, signature: SignatureId },
    #[error("cannot merge signature {0} with itself")]
    SelfMerge(SignatureId),
    #[error("no encoded vector for member `{0}`")]
    MissingVector(PropertyId),
}

/// Applies one action, returning generation + 1. `set` is left untouched.
/// Merges recompute statistics from the member vectors in `corpus`.
pub fn apply_retune(set: &SignatureSet, action: &RetuneAction, corpus: &EncodedCorpus) -> Result<SignatureSet, RetuneError> {
    if action.generation != set.generation {
        return Err(RetuneError::StaleGeneration { action: action.generation, current: set.generation });
    }
    let mut next = set.clone();
    match &action.action {
        RetuneOp::MergeSignatures { a, b } => {
            if a == b {
                return Err(RetuneError::SelfMerge(*a));
            }
            let sa = set.get(*a).ok_or(RetuneError::UnknownSignature(*a))?;
            let sb = set.get(*b).ok_or(RetuneError::UnknownSignature(*b))?;
            if sa.kind != sb.kind {
                return Err(RetuneError::KindMismatch { a: *a, b: *b });
            }
            for (_, s) in next.assignment.iter_mut().filter(|(_, s)| **s == Some(*b)) {
                *s = Some(*a);
            }
            let pooled: BTreeSet<&PropertyId> =
                set.assignment.iter().filter(|(_, s)| **s == Some(*a) || **s == Some(*b)).map(|(p, _)| p).collect();
            // corpus order, the same order mining sees members in
            let members: Vec<&FeatureVector> = corpus.of_kind(sa.kind).filter(|v| pooled.contains(&v.property_id)).collect();
            if members.len() != pooled.len() {
                let missing = pooled.iter().find(|p| corpus.get(p).is_none()).map_or_else(|| (*pooled.first().unwrap()).clone(), |p| (*p).clone());
                return Err(RetuneError::MissingVector(missing));
            }
            let (numeric_stats, categorical_stats) = compute_stats(&feature_schema(sa.kind), &members, corpus);
            let merged = next.get_mut(*a).expect("checked above");
            merged.member_count = members.len();
            merged.numeric_stats = numeric_stats;
            merged.categorical_stats = categorical_stats;
            if sa.template_class != sb.template_class {
                merged.template_class = format!("{}|{}", sa.template_class, sb.template_class);
            }
            for (f, vals) in &sb.whitelist {
                merged.whitelist.entry(f.clone()).or_default().extend(vals.iter().cloned());
            }
            merged.suppressed.extend(sb.suppressed.iter().cloned());
            next.signatures.retain(|s| s.id != *b);
        }
        RetuneOp::AdjustThreshold { signature, threshold } => {
            if !(threshold.is_finite() && *threshold > 0.0) {
                return Err(RetuneError::InvalidThreshold(*threshold));
            }
            next.get_mut(*signature).ok_or(RetuneError::UnknownSignature(*signature))?.threshold = *threshold;
        }
        RetuneOp::WhitelistValue { signature, feature, value } => {
            let sig = next.get_mut(*signature).ok_or(RetuneError::UnknownSignature(*signature))?;
            if feature_schema(sig.kind).feature(feature).is_none() {
                return Err(RetuneError::UnknownFeature { signature: *signature, feature: feature.clone() });
            }
            sig.whitelist.entry(feature.clone()).or_default().insert(value.clone());
        }
        RetuneOp::SuppressFinding { property, signature } => {
            if set.get(*signature).is_none() {
                return Err(RetuneError::UnknownSignature(*signature));
            }
            if set.signature_of(property) != Some(*signature) {
                return Err(RetuneError::NotAMember { property: property.clone(), signature: *signature });
            }
            next.get_mut(*signature).expect("checked above").suppressed.insert(property.clone());
        }
    }
    next.generation += 1;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RetuneLog {
    pub base_generation: u64,
    pub actions: Vec<RetuneAction>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("retune log is empty; expected a header line")]
    MissingHeader,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    base_generation: u64,
}

impl RetuneLog {
    pub fn new(base_generation: u64) -> Self {
        RetuneLog { base_generation, actions: Vec::new() }
    }

    /// Header line `{"base_generation":N}` followed by one action per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header { base_generation: self.base_generation }).expect("header serializes");
        out.push('\n');
        for a in &self.actions {
            let _ = writeln!(out, "{}", serde_json::to_string(a).expect("actions serialize"));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (i, first) = lines.next().ok_or(LogError::MissingHeader)?;
        let header: Header = serde_json::from_str(first).map_err(|e| LogError::Syntax { line: i + 1, message: e.to_string() })?;
        let actions = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| LogError::Syntax { line: i + 1, message: e.to_string() }))
            .collect::<Result<_, _>>()?;
        Ok(RetuneLog { base_generation: header.base_generation, actions })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("log starts at generation {log}, base set is at generation {set}")]
    BaseGeneration { log: u64, set: u64 },
    #[error("action #{index} failed: {source}")]
    Action { index: usize, source: RetuneError },
}

/// Folds `apply_retune` over the log.
pub fn replay(log: &RetuneLog, base: &SignatureSet, corpus: &EncodedCorpus) -> Result<SignatureSet, ReplayError> {
    if log.base_generation != base.generation {
        return Err(ReplayError::BaseGeneration { log: log.base_generation, set: base.generation });
    }
    let mut cur = base.clone();
    for (index, a) in log.actions.iter().enumerate() {
        cur = apply_retune(&cur, a, corpus).map_err(|source| ReplayError::Action { index, source })?;
    }
    Ok(cur)
}

/// Findings under `set`; the same as running the signature detector.
pub fn recompute(bundle: &AnalysisBundle, set: &SignatureSet) -> Result<Vec<Finding>, DetectError> {
    detect_signature_outliers(&bundle.properties, &bundle.corpus, set, &bundle.graph)
}
