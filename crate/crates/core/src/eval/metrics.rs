//! Precision and recall over flagged property sets.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::corpusgen::{GroundTruth, Label};
use crate::detectors::Finding;
use crate::properties::PropertyId;

/// A ratio that is undefined when its denominator is zero. Serializes as a
/// number or the string `"undefined"`, never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Defined(v) => write!(f, "{v:.3}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Defined(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric::Defined(v)),
            Raw::Str(s) if s == "undefined" => Ok(Metric::Undefined),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Metric,
    pub recall: Metric,
    /// Distinct properties flagged.
    pub emitted_findings: u64,
    /// Flagged properties that carry a ground-truth label.
    pub labeled_findings: u64,
}

impl EvalMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        EvalMetrics {
            tp,
            fp,
            fn_,
            precision: Metric::ratio(tp, tp + fp),
            recall: Metric::ratio(tp, tp + fn_),
            emitted_findings: tp + fp,
            labeled_findings: tp + fp,
        }
    }

    pub fn precision_exact(&self) -> Option<Ratio<u64>> {
        (self.tp + self.fp > 0).then(|| Ratio::new(self.tp, self.tp + self.fp))
    }

    pub fn recall_exact(&self) -> Option<Ratio<u64>> {
        (self.tp + self.fn_ > 0).then(|| Ratio::new(self.tp, self.tp + self.fn_))
    }
}

/// TP = flagged and buggy, FP = flagged and clean, FN = buggy and unflagged.
/// Properties absent from the truth are emitted but not labeled.
pub fn compute_metrics(findings: &[Finding], truth: &GroundTruth) -> EvalMetrics {
    let flagged: BTreeSet<&PropertyId> = findings.iter().map(|f| &f.property_id).collect();
    let (mut tp, mut fp, mut labeled) = (0, 0, 0);
    for id in &flagged {
        match truth.labels.get(*id) {
            Some(Label::Buggy(_)) => {
                tp += 1;
                labeled += 1;
            }
            Some(Label::Clean) => {
                fp += 1;
                labeled += 1;
            }
            None => {}
        }
    }
    let fn_ = truth.buggy().filter(|(id, _)| !flagged.contains(id)).count() as u64;
    EvalMetrics {
        tp,
        fp,
        fn_,
        precision: Metric::ratio(tp, tp + fp),
        recall: Metric::ratio(tp, tp + fn_),
        emitted_findings: flagged.len() as u64,
        labeled_findings: labeled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_marker() {
        let m = EvalMetrics::from_counts(0, 0, 0);
        assert_eq!(m.precision, Metric::Undefined);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"precision\":\"undefined\""));
        assert!(!json.contains("NaN"));
        assert_eq!(serde_json::from_str::<EvalMetrics>(&json).unwrap(), m);
    }

    #[test]
    fn counts() {
        let m = EvalMetrics::from_counts(498, 32, 8);
        assert!((m.precision.value().unwrap() - 0.940).abs() < 1e-3);
        assert_eq!(m.precision_exact(), Some(Ratio::new(498, 530)));
    }
}
