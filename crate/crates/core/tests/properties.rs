//! Property-based checks of pipeline invariants.

mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use chrono::DateTime;
use num_rational::Ratio;
use proptest::prelude::*;

use common::corpus;
use netsig_core::detectors::{fit_gmm, run_detector, score_modified_zscore, score_zscore, DetectorConfig, Finding};
use netsig_core::eval::{compute_metrics, EvalMetrics, GroundTruth, Label};
use netsig_core::pipeline::AnalysisBundle;
use netsig_core::properties::PropertyId;
use netsig_core::retune::{apply_retune, RetuneAction, RetuneLog, RetuneOp};
use netsig_core::severity::{apply_severity, kendall_tau, rank, RankMode, SeverityWeights};
use netsig_core::signatures::{mine_signatures, MiningParams, SignatureSet};

struct World {
    bundle: AnalysisBundle,
    truth: GroundTruth,
    set: SignatureSet,
    findings: Vec<Finding>,
}

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let (bundle, truth) = corpus(40, 21);
        let set = mine_signatures(&bundle.corpus, &MiningParams::default()).unwrap();
        let findings = run_detector(&DetectorConfig::default(), &bundle, Some(&set)).unwrap();
        World { bundle, truth, set, findings }
    })
}

fn action(generation: u64, op: RetuneOp) -> RetuneAction {
    RetuneAction { generation, action: op, author: "prop".into(), timestamp: DateTime::UNIX_EPOCH, note: None }
}

fn ids(findings: &[Finding]) -> BTreeSet<PropertyId> {
    findings.iter().map(|f| f.property_id.clone()).collect()
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e4f64..1e4, 2..50)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zscore_is_affine_invariant(xs in series(), a in prop_oneof![0.01f64..100.0, -100.0f64..-0.01], b in -1e3f64..1e3) {
        let base = score_zscore(&xs).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        for (p, q) in base.iter().zip(score_zscore(&moved).unwrap()) {
            prop_assert!((p - q).abs() <= 1e-6 * p.max(1.0), "{p} vs {q}");
        }
    }

    #[test]
    fn modified_zscore_is_scale_invariant(xs in prop::collection::vec(-1000i32..1000, 2..50), a in 1i32..50, b in -1000i32..1000) {
        // integer data keeps the median/MAD arithmetic exact
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let base = score_modified_zscore(&xs).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| f64::from(a) * x + f64::from(b)).collect();
        for (p, q) in base.iter().zip(score_modified_zscore(&moved).unwrap()) {
            prop_assert!(p == &q || (p - q).abs() <= 1e-9 * p.max(1.0), "{p} vs {q}");
        }
    }

    #[test]
    fn em_is_monotone_and_normalized(
        clusters in prop::collection::vec((-100f64..100.0, 0.1f64..10.0, 3usize..30), 1..4),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut data = Vec::new();
        for (i, (c, spread, n)) in clusters.iter().enumerate() {
            for j in 0..*n {
                let t = ((j * 7919 + i * 104_729) % 1000) as f64 / 1000.0 - 0.5;
                data.push(vec![c + spread * t]);
            }
        }
        let cfg = DetectorConfig { gmm_components: k, seed, ..DetectorConfig::default() };
        let m = fit_gmm(&data, &cfg).unwrap();
        for w in m.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "log-likelihood fell: {} -> {}", w[0], w[1]);
        }
        prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for x in &data {
            prop_assert!((m.responsibilities(x).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn raising_a_threshold_never_adds_findings(pick in any::<prop::sample::Index>(), factor in 1.0f64..50.0) {
        let w = world();
        let sig = &w.set.signatures[pick.index(w.set.signatures.len())];
        let next = apply_retune(&w.set, &action(w.set.generation, RetuneOp::AdjustThreshold { signature: sig.id, threshold: sig.threshold * factor }), &w.bundle.corpus).unwrap();
        let after = run_detector(&DetectorConfig::default(), &w.bundle, Some(&next)).unwrap();
        prop_assert!(ids(&after).is_subset(&ids(&w.findings)));
        prop_assert_eq!(next.generation, w.set.generation + 1);
    }

    #[test]
    fn suppressing_clean_findings_never_lowers_precision(mask in prop::collection::vec(any::<bool>(), 64)) {
        let w = world();
        let clean: Vec<&Finding> = w.findings.iter().filter(|f| w.truth.label(&f.property_id) == Label::Clean).collect();
        let mut set = w.set.clone();
        let mut prev = compute_metrics(&w.findings, &w.truth);
        for (f, _) in clean.iter().zip(&mask).filter(|(_, m)| **m) {
            let op = RetuneOp::SuppressFinding { property: f.property_id.clone(), signature: f.violated_signature.unwrap() };
            set = apply_retune(&set, &action(set.generation, op), &w.bundle.corpus).unwrap();
            let m = compute_metrics(&run_detector(&DetectorConfig::default(), &w.bundle, Some(&set)).unwrap(), &w.truth);
            prop_assert!(m.precision_exact() >= prev.precision_exact());
            prop_assert_eq!(m.recall_exact(), prev.recall_exact());
            prev = m;
        }
    }

    #[test]
    fn ranking_is_a_sorted_permutation(weights in prop::collection::vec(0.01f64..5.0, 5), alpha in 0.0f64..2.0, mode_sev in any::<bool>()) {
        let w = world();
        let mut sw = SeverityWeights::default();
        for (v, nw) in sw.problem_type_weight.values_mut().zip(&weights) {
            *v = *nw;
        }
        sw.blast_radius_scale = alpha;
        let mut fs = w.findings.clone();
        apply_severity(&mut fs, &w.bundle.graph, &sw).unwrap();
        let mode = if mode_sev { RankMode::Severity } else { RankMode::Outlier };
        let ranked = rank(fs.clone(), mode, &sw).unwrap();
        prop_assert_eq!(ids(&ranked), ids(&fs));
        prop_assert_eq!(ranked.len(), fs.len());
        for (i, f) in ranked.iter().enumerate() {
            prop_assert_eq!(f.rank, Some(i + 1));
        }
        let key = |f: &Finding| if mode_sev { f.severity.unwrap() } else { f.outlier_score };
        for p in ranked.windows(2) {
            prop_assert!(key(&p[0]) >= key(&p[1]));
        }
    }

    #[test]
    fn metric_identities(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
        let m = EvalMetrics::from_counts(tp, fp, fn_);
        if let Some(p) = m.precision_exact() {
            prop_assert_eq!(p * Ratio::from_integer(tp + fp), Ratio::from_integer(tp));
        } else {
            prop_assert_eq!(tp + fp, 0);
        }
        if let Some(r) = m.recall_exact() {
            prop_assert_eq!(r * Ratio::from_integer(tp + fn_), Ratio::from_integer(tp));
        }
    }

    #[test]
    fn kendall_tau_bounds(n in 2usize..40, swaps in prop::collection::vec((0usize..40, 0usize..40), 0..20)) {
        let a: Vec<PropertyId> = (0..n).map(|i| PropertyId::from(format!("p{i:02}").as_str())).collect();
        let mut b = a.clone();
        for (i, j) in swaps {
            b.swap(i % n, j % n);
        }
        let t = kendall_tau(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&t));
        prop_assert_eq!(kendall_tau(&a, &a), 1.0);
        let rev: Vec<PropertyId> = a.iter().rev().cloned().collect();
        prop_assert_eq!(kendall_tau(&a, &rev), -1.0);
    }
}

#[test]
fn whitelisting_every_deviant_value_clears_a_finding() {
    let w = world();
    let f = w.findings.iter().find(|f| f.violated_signature.is_some() && !f.deviant_features.is_empty()).unwrap();
    let sig = f.violated_signature.unwrap();
    let mut set = w.set.clone();
    for d in &f.deviant_features {
        let op = RetuneOp::WhitelistValue { signature: sig, feature: d.feature.clone(), value: d.observed.clone() };
        set = apply_retune(&set, &action(set.generation, op), &w.bundle.corpus).unwrap();
    }
    let after = run_detector(&DetectorConfig::default(), &w.bundle, Some(&set)).unwrap();
    let still = after.iter().find(|g| g.property_id == f.property_id);
    assert!(still.is_none_or(|g| g.violated_signature != Some(sig) || g.deviant_features.is_empty()), "{still:?}");
}

#[test]
fn state_files_round_trip() {
    let w = world();
    assert_eq!(SignatureSet::from_json(&w.set.to_json()).unwrap(), w.set);
    let mut log = RetuneLog::new(w.set.generation);
    let s0 = w.set.signatures[0].id;
    log.actions.push(action(0, RetuneOp::AdjustThreshold { signature: s0, threshold: 4.25 }));
    log.actions.push(action(1, RetuneOp::SuppressFinding { property: "r001/acl/X".into(), signature: s0 }));
    assert_eq!(RetuneLog::from_jsonl(&log.to_jsonl()).unwrap(), log);
}
