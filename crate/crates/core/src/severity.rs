//! Severity scoring and ranking of findings.
//!
//! `severity = beta * (score / threshold) * weight[problem_type] * (1 + alpha * blast_radius)`

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{Finding, ProblemType};
use crate::graph::{GraphError, ReferenceGraph};
use crate::properties::PropertyId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityWeights {
    pub problem_type_weight: BTreeMap<ProblemType, f64>,
    /// alpha
    pub blast_radius_scale: f64,
    /// beta
    pub outlier_weight: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        SeverityWeights {
            problem_type_weight: BTreeMap::from([
                (ProblemType::UndefinedReference, 1.0),
                (ProblemType::ShadowedRule, 0.8),
                (ProblemType::InconsistentAcrossDevices, 0.6),
                (ProblemType::DeviantAttributeValue, 0.4),
                (ProblemType::Unknown, 0.2),
            ]),
            blast_radius_scale: 0.1,
            outlier_weight: 1.0,
        }
    }
}

impl SeverityWeights {
    /// Every problem type weighted 1, no blast-radius term.
    pub fn uniform() -> Self {
        SeverityWeights {
            problem_type_weight: ProblemType::ALL.into_iter().map(|p| (p, 1.0)).collect(),
            blast_radius_scale: 0.0,
            outlier_weight: 1.0,
        }
    }

    pub fn weight(&self, pt: ProblemType) -> f64 {
        self.problem_type_weight.get(&pt).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SeverityError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !self.problem_type_weight.values().all(|&w| ok(w)) || !ok(self.blast_radius_scale) || !ok(self.outlier_weight) {
            return Err(SeverityError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Parses a TOML weights file. Problem types left out keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, SeverityError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Partial {
            #[serde(default)]
            problem_type_weight: BTreeMap<ProblemType, f64>,
            blast_radius_scale: Option<f64>,
            outlier_weight: Option<f64>,
        }
        let p: Partial = toml::from_str(text).map_err(|e| SeverityError::Toml(e.to_string()))?;
        let mut w = SeverityWeights::default();
        w.problem_type_weight.extend(p.problem_type_weight);
        if let Some(a) = p.blast_radius_scale {
            w.blast_radius_scale = a;
        }
        if let Some(b) = p.outlier_weight {
            w.outlier_weight = b;
        }
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SeverityError {
    #[error("finding for unknown property `{0}`")]
    UnknownProperty(PropertyId),
    #[error("finding for `{0}` has no severity")]
    MissingSeverity(PropertyId),
    #[error("invalid severity weights: {0}")]
    InvalidWeights(String),
    #[error("cannot parse severity weights: {0}")]
    Toml(String),
}

impl From<GraphError> for SeverityError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownProperty(id) => SeverityError::UnknownProperty(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Outlier,
    #[default]
    Severity,
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankMode::Outlier => "outlier",
            RankMode::Severity => "severity",
        })
    }
}

impl FromStr for RankMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "outlier" => Ok(RankMode::Outlier),
            "severity" => Ok(RankMode::Severity),
            other => Err(format!("unknown rank mode `{other}` (expected severity or outlier)")),
        }
    }
}

/// Severity from the finding's own score and threshold.
pub fn severity_value(finding: &Finding, blast_radius: usize, weights: &SeverityWeights) -> f64 {
    let normalized = finding.outlier_score / finding.threshold;
    weights.outlier_weight * normalized * weights.weight(finding.problem_type) * (1.0 + weights.blast_radius_scale * blast_radius as f64)
}

pub fn compute_severity(finding: &Finding, graph: &ReferenceGraph, weights: &SeverityWeights) -> Result<f64, SeverityError> {
    let blast = graph.blast_radius(&finding.property_id)?;
    Ok(severity_value(finding, blast, weights))
}

/// Fills `severity` on every finding.
pub fn apply_severity(findings: &mut [Finding], graph: &ReferenceGraph, weights: &SeverityWeights) -> Result<(), SeverityError> {
    weights.validate()?;
    for f in findings.iter_mut() {
        f.severity = Some(compute_severity(f, graph, weights)?);
    }
    Ok(())
}

/// Sorts descending by the mode's score, ties by problem-type weight then
/// property id, and numbers the result 1..n.
pub fn rank(mut findings: Vec<Finding>, mode: RankMode, weights: &SeverityWeights) -> Result<Vec<Finding>, SeverityError> {
    let key = |f: &Finding| -> Result<f64, SeverityError> {
        match mode {
            RankMode::Outlier => Ok(f.outlier_score),
            RankMode::Severity => f.severity.ok_or_else(|| SeverityError::MissingSeverity(f.property_id.clone())),
        }
    };
    let mut keyed = findings.drain(..).map(|f| key(&f).map(|k| (k, f))).collect::<Result<Vec<_>, _>>()?;
    keyed.sort_by(|(ka, a), (kb, b)| {
        kb.total_cmp(ka)
            .then_with(|| weights.weight(b.problem_type).total_cmp(&weights.weight(a.problem_type)))
            .then_with(|| a.property_id.cmp(&b.property_id))
    });
    Ok(keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut f))| {
            f.rank = Some(i + 1);
            f
        })
        .collect())
}

/// Kendall tau-a between two orderings of the same items. Items missing
/// from `b` are ignored; fewer than two shared items give 1.
pub fn kendall_tau(a: &[PropertyId], b: &[PropertyId]) -> f64 {
    let pos: HashMap<&PropertyId, usize> = b.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let seq: Vec<usize> = a.iter().filter_map(|id| pos.get(id).copied()).collect();
    let n = seq.len();
    if n < 2 {
        return 1.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            if seq[i] < seq[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}
