//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! A criterion listed in `KNOWN_UNATTAINABLE` is still run and still prints
//! FAIL, but does not fail the process unless `NETSIG_ACCEPTANCE_STRICT` is
//! set. The optional scale run needs `NETSIG_STRESS=1`.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::DateTime;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use netsig::service::{router, AppState};
use netsig::state::{AnalyzeOptions, Session, FINDINGS_FILE, MANIFEST_FILE, RETUNE_FILE, SIGNATURES_FILE};
use netsig_core::detectors::{
    fit_gmm, run_detector, score_modified_zscore, DetectorConfig, Finding, Method, ProblemType,
};
use netsig_core::eval::{
    compare_detectors, compute_metrics, generate, generate_corpus, scripted_retune_log, CorpusSpec, DetectorRun,
    GroundTruth, Label,
};
use netsig_core::ingest::{load_snapshot, NetworkSnapshot};
use netsig_core::pipeline::AnalysisBundle;
use netsig_core::properties::{PropertyId, PropertyKind};
use netsig_core::report::build_sankey;
use netsig_core::retune::{apply_retune, recompute, replay, RetuneAction, RetuneLog, RetuneOp};
use netsig_core::severity::{apply_severity, kendall_tau, rank, RankMode, SeverityWeights};
use netsig_core::signatures::{mine_signatures, MiningParams};

/// Criteria that cannot pass as written, with the reason.
const KNOWN_UNATTAINABLE: &[(u8, &str)] =
    &[(1, "published modified-z precision 0.386 disagrees with its own counts: 417/(417+692) = 0.3760")];

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(detail: impl Into<String>) -> Outcome {
    Outcome { pass: true, detail: detail.into() }
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let strict = std::env::var_os("NETSIG_ACCEPTANCE_STRICT").is_some();
    let stress = std::env::var_os("NETSIG_STRESS").is_some();
    let criteria: Vec<(u8, &str, fn() -> Outcome)> = vec![
        (1, "published detector counts reproduce published precision/recall", c1_published_arithmetic),
        (2, "detector precision ordering on the default labeled corpus", c2_detector_ordering),
        (3, "each scripted suppression keeps precision' >= precision and recall' = recall", c3_retune_lift),
        (4, "severity re-ranks findings; unit weights reproduce outlier order", c4_severity_reranking),
        (5, "statistical oracles (modified z, EM monotonicity, normalization)", c5_statistical_oracles),
        (6, "dangling references equal brute-force scan; generator agreement", c6_reference_oracle),
        (7, "determinism, log replay and service/CLI equivalence", c7_determinism_replay),
        (8, "flow report conservation", c8_sankey_conservation),
    ];
    let mut hard_failures = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| check(false, format!("panicked: {}", panic_message(&e))));
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        let note = match (outcome.pass, known) {
            (false, Some(why)) => format!(" [known: {why}]"),
            _ => String::new(),
        };
        println!("{tag} criterion {id}: {name} ({:.2?}) {}{note}", start.elapsed(), outcome.detail);
        if !outcome.pass && (known.is_none() || strict) {
            hard_failures += 1;
        }
    }
    if stress {
        let start = Instant::now();
        let o = catch_unwind(c9_scale).unwrap_or_else(|e| check(false, format!("panicked: {}", panic_message(&e))));
        println!("{} criterion 9: scale smoke ({:.2?}) {}", if o.pass { "PASS" } else { "FAIL" }, start.elapsed(), o.detail);
    } else {
        println!("SKIP criterion 9: scale smoke (set NETSIG_STRESS=1 to run; not gating)");
    }
    if hard_failures > 0 {
        eprintln!("{hard_failures} criteria failed");
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

fn bare_finding(id: &str) -> Finding {
    Finding {
        property_id: PropertyId::from(id),
        kind: PropertyKind::Acl,
        detector: Method::Signature,
        outlier_score: 10.0,
        threshold: 3.5,
        violated_signature: None,
        deviant_features: Vec::new(),
        problem_type: ProblemType::Unknown,
        severity: None,
        rank: None,
    }
}

/// Findings and labels realizing the given confusion counts.
fn realize(tp: u64, fp: u64, fn_: u64) -> (Vec<Finding>, GroundTruth) {
    let mut truth = GroundTruth::from_json(r#"{"seed":0,"labels":{},"injected_count":{},"templates":{},"benign_variants":[]}"#)
        .expect("empty truth parses");
    let mut findings = Vec::new();
    for i in 0..tp {
        let id = format!("d/acl/TP{i}");
        truth.labels.insert(PropertyId::from(id.as_str()), Label::Buggy(ProblemType::Unknown));
        findings.push(bare_finding(&id));
    }
    for i in 0..fp {
        let id = format!("d/acl/FP{i}");
        truth.labels.insert(PropertyId::from(id.as_str()), Label::Clean);
        findings.push(bare_finding(&id));
    }
    for i in 0..fn_ {
        truth.labels.insert(PropertyId::from(format!("d/acl/FN{i}").as_str()), Label::Buggy(ProblemType::Unknown));
    }
    (findings, truth)
}

fn c1_published_arithmetic() -> Outcome {
    // (detector, TP, FP, FN, published precision, published recall)
    const PUBLISHED: [(&str, u64, u64, u64, f64, f64); 5] = [
        ("zscore", 392, 1031, 240, 0.275, 0.620),
        ("modified_zscore", 417, 692, 132, 0.386, 0.760),
        ("gmm", 298, 608, 220, 0.329, 0.575),
        ("signature", 472, 154, 32, 0.754, 0.937),
        ("signature+retune", 498, 32, 8, 0.940, 0.984),
    ];
    let start = Instant::now();
    let mut misses = Vec::new();
    let mut matched = 0;
    for (name, tp, fp, fn_, p, r) in PUBLISHED {
        let (findings, truth) = realize(tp, fp, fn_);
        let m = compute_metrics(&findings, &truth);
        assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
        for (what, got, want) in [("precision", m.precision.value().unwrap(), p), ("recall", m.recall.value().unwrap(), r)] {
            if (got - want).abs() <= 0.001 {
                matched += 1;
            } else {
                misses.push(format!("{name} {what} {got:.4} vs published {want:.3}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(1);
    check(misses.is_empty() && fast, format!("{matched}/10 within 0.001; {}; {elapsed:.2?} < 1s", if misses.is_empty() { "all match".into() } else { misses.join(", ") }))
}

fn default_corpus() -> (AnalysisBundle, GroundTruth) {
    let (snap, truth) = generate_corpus(&CorpusSpec::default()).expect("default spec generates");
    (AnalysisBundle::build(snap).expect("generated corpus encodes"), truth)
}

fn c2_detector_ordering() -> Outcome {
    let start = Instant::now();
    let (bundle, truth) = default_corpus();
    let injected = truth.bug_count() as f64 / truth.labels.len() as f64;
    let table = compare_detectors(&bundle, &truth, &DetectorRun::standard(0), &MiningParams::default());
    let elapsed = start.elapsed();
    let p = |n: &str| table.row(n).and_then(|m| m.precision.value()).unwrap_or(f64::NAN);
    let baseline = ["zscore", "modified_zscore", "gmm"].map(p).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let sig = p("signature");
    let tuned = p("signature+retune");
    let recall = table.row("signature").and_then(|m| m.recall.value()).unwrap_or(0.0);
    let pass = sig > baseline && tuned > sig && recall >= 0.9 && elapsed < Duration::from_secs(60);
    check(
        pass,
        format!(
            "{} nodes, {} properties, {:.1}% injected; precision best baseline {baseline:.3} < signature {sig:.3} < retuned {tuned:.3}; signature recall {recall:.3}; {elapsed:.2?} < 60s",
            bundle.snapshot.devices.len(),
            bundle.properties.len(),
            100.0 * injected
        ),
    )
}

fn c3_retune_lift() -> Outcome {
    let (bundle, truth) = default_corpus();
    let set = mine_signatures(&bundle.corpus, &MiningParams::default()).expect("mining succeeds");
    let findings = run_detector(&DetectorConfig::default(), &bundle, Some(&set)).expect("detection succeeds");
    let log = scripted_retune_log(&set, &findings, &truth);
    let mut cur = set;
    let mut prev = compute_metrics(&findings, &truth);
    let first = prev.precision_exact();
    for (i, a) in log.actions.iter().enumerate() {
        cur = apply_retune(&cur, a, &bundle.corpus).expect("scripted action applies");
        let m = compute_metrics(&recompute(&bundle, &cur).expect("recompute succeeds"), &truth);
        if m.precision_exact() < prev.precision_exact() || m.recall_exact() != prev.recall_exact() {
            return check(false, format!("action #{i}: precision {:?} -> {:?}, recall {:?} -> {:?}", prev.precision_exact(), m.precision_exact(), prev.recall_exact(), m.recall_exact()));
        }
        prev = m;
    }
    ok(format!("{} actions; precision {} -> {}; recall fixed at {}", log.actions.len(), show(first), show(prev.precision_exact()), show(prev.recall_exact())))
}

fn show<T: std::fmt::Display>(r: Option<T>) -> String {
    r.map_or_else(|| "undefined".to_owned(), |r| r.to_string())
}

fn c4_severity_reranking() -> Outcome {
    let (bundle, _) = default_corpus();
    let set = mine_signatures(&bundle.corpus, &MiningParams::default()).expect("mining succeeds");
    let findings = run_detector(&DetectorConfig::default(), &bundle, Some(&set)).expect("detection succeeds");
    let kinds: BTreeSet<_> = findings.iter().map(|f| f.problem_type).collect();
    let order = |mode, w: &SeverityWeights| -> Vec<PropertyId> {
        let mut fs = findings.clone();
        apply_severity(&mut fs, &bundle.graph, w).expect("severity applies");
        rank(fs, mode, w).expect("ranking succeeds").into_iter().map(|f| f.property_id).collect()
    };
    let dflt = SeverityWeights::default();
    let tau = kendall_tau(&order(RankMode::Severity, &dflt), &order(RankMode::Outlier, &dflt));
    let unit = SeverityWeights::uniform();
    let same = order(RankMode::Severity, &unit) == order(RankMode::Outlier, &unit);
    check(tau < 1.0 && same, format!("{} findings over {} problem types; default weights tau = {tau:.4}; unit weights identical order: {same}", findings.len(), kinds.len()))
}

fn sorted_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn c5_statistical_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_modz: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..80);
        let discrete = rng.random_bool(0.25);
        let xs: Vec<f64> = (0..n).map(|_| if discrete { f64::from(rng.random_range(0..5)) } else { rng.random_range(-500.0..500.0) }).collect();
        let med = sorted_median(&xs);
        let mad = sorted_median(&xs.iter().map(|x| (x - med).abs()).collect::<Vec<_>>());
        for (x, got) in xs.iter().zip(score_modified_zscore(&xs).expect("series long enough")) {
            let want = if mad == 0.0 {
                if *x == med { 0.0 } else { f64::INFINITY }
            } else {
                0.6745 * (x - med).abs() / mad
            };
            let err = if want.is_infinite() { if got == want { 0.0 } else { f64::INFINITY } } else { (got - want).abs() };
            worst_modz = worst_modz.max(err);
        }
    }
    let mut worst_drop: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed as usize % 4);
        let centers: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
        let data: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let c = centers[i % centers.len()];
                vec![c + rng.random_range(-3.0..3.0) * rng.random_range(0.1..1.0)]
            })
            .collect();
        let cfg = DetectorConfig { gmm_components: k, seed, ..DetectorConfig::default() };
        let m = fit_gmm(&data, &cfg).expect("fit succeeds");
        for w in m.trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        worst_norm = worst_norm.max((m.weights.iter().sum::<f64>() - 1.0).abs());
        for x in &data {
            worst_norm = worst_norm.max((m.responsibilities(x).iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(
        worst_modz <= 1e-12 && worst_drop <= 1e-9 && worst_norm <= 1e-12,
        format!("modz max err {worst_modz:.1e} (1000 series); EM max log-lik drop {worst_drop:.1e} (100 fits); normalization max err {worst_norm:.1e}"),
    )
}

type DanglingKey = (String, String, String, usize);

/// Token scan of raw entries with the resolution rules: same device, or any
/// device for route filters and policies.
fn brute_force_dangling(snap: &NetworkSnapshot) -> BTreeSet<DanglingKey> {
    let mut defined: BTreeSet<(String, String, String)> = BTreeSet::new();
    for d in snap.devices.values() {
        for s in &d.stanzas {
            defined.insert((d.device_name.clone(), s.kind.keyword().to_owned(), s.name.clone()));
        }
    }
    let mut out = BTreeSet::new();
    for d in snap.devices.values() {
        for s in &d.stanzas {
            let from = format!("{}/{}/{}", d.device_name, s.kind.keyword(), s.name);
            for (e, &line) in s.entries.iter().zip(&s.entry_lines) {
                let t: Vec<&str> = e.tokens().collect();
                let mut refs: Vec<(&str, &str)> = Vec::new();
                match (s.kind.keyword(), t.as_slice()) {
                    ("acl", _) => refs.extend(t.windows(2).filter(|w| w[0] == "prefix-list").map(|w| ("route-filter", w[1]))),
                    ("vrf" | "bgp-neighbor", ["import-policy" | "export-policy", n, ..]) => refs.push(("routing-policy", n)),
                    ("routing-policy", ["match", "acl", n, ..]) => refs.push(("acl", n)),
                    ("routing-policy", ["match", "route-filter", n, ..]) => refs.push(("route-filter", n)),
                    ("interface" | "bgp-neighbor", ["vrf", n, ..]) => refs.push(("vrf", n)),
                    ("interface", ["acl-in" | "acl-out", n, ..]) => refs.push(("acl", n)),
                    ("bgp-neighbor", ["update-source", n, ..]) => refs.push(("interface", n)),
                    _ => {}
                }
                for (kind, name) in refs {
                    let local = defined.contains(&(d.device_name.clone(), kind.to_owned(), name.to_owned()));
                    let global = matches!(kind, "route-filter" | "routing-policy") && defined.iter().any(|(_, k, n)| k == kind && n == name);
                    if !local && !global {
                        out.insert((from.clone(), kind.to_owned(), name.to_owned(), line));
                    }
                }
            }
        }
    }
    out
}

fn library_dangling(b: &AnalysisBundle) -> BTreeSet<DanglingKey> {
    b.graph.dangling.iter().map(|d| (d.from.to_string(), d.target.keyword().to_owned(), d.missing_name.clone(), d.site.line)).collect()
}

fn core_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn c6_reference_oracle() -> Outcome {
    let fx = AnalysisBundle::build(load_snapshot(&core_fixtures().join("snapshot")).expect("fixture loads")).expect("fixture encodes");
    if library_dangling(&fx) != brute_force_dangling(&fx.snapshot) {
        return check(false, "fixture snapshot disagrees with brute force");
    }
    let (mut injected, mut found) = (0, 0);
    for seed in 0..50u64 {
        let spec = CorpusSpec { node_count: 8 + (seed as usize % 9), seed: 500 + seed, ..CorpusSpec::default() };
        let (snap, truth) = generate_corpus(&spec).expect("spec generates");
        let b = AnalysisBundle::build(snap).expect("corpus encodes");
        if library_dangling(&b) != brute_force_dangling(&b.snapshot) {
            return check(false, format!("random corpus seed {} disagrees with brute force", spec.seed));
        }
        for (id, _) in truth.buggy().filter(|(_, p)| *p == ProblemType::UndefinedReference) {
            injected += 1;
            if b.graph.has_dangling(id) {
                found += 1;
            }
        }
    }
    check(injected > 0 && found == injected, format!("fixture + 50 random corpora match; injected dangling references detected {found}/{injected}"))
}

fn netsig(args: &[&str]) -> i32 {
    netsig::cli::run(std::iter::once("netsig").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let resp = app.clone().oneshot(req.body(body.map_or_else(Body::empty, Body::from)).expect("request builds")).await.expect("infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body reads").to_bytes();
    (status, serde_json::from_slice(&bytes).expect("JSON body"))
}

fn c7_determinism_replay() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let g = generate(&CorpusSpec { node_count: 60, seed: 31, ..CorpusSpec::default() }).expect("spec generates");
    let snap_dir = dir.path().join("snapshot");
    g.write_configs(&snap_dir).expect("configs written");

    // analyze twice
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(netsig(&["analyze", p(&snap_dir), "--out", p(&a)]), 0);
    assert_eq!(netsig(&["analyze", p(&snap_dir), "--out", p(&b)]), 0);
    for f in [SIGNATURES_FILE, FINDINGS_FILE, RETUNE_FILE, MANIFEST_FILE] {
        if fs::read(a.join(f)).expect("written") != fs::read(b.join(f)).expect("written") {
            return check(false, format!("{f} differs between identical analyze runs"));
        }
    }

    // live session vs replay of its log
    let mut live = Session::analyze(&snap_dir, AnalyzeOptions::default()).expect("analyze");
    let base = live.set.clone();
    let flagged: Vec<Finding> = live.findings.iter().filter(|f| f.violated_signature.is_some()).take(4).cloned().collect();
    let mut ops = vec![
        RetuneOp::SuppressFinding { property: flagged[0].property_id.clone(), signature: flagged[0].violated_signature.unwrap() },
        RetuneOp::AdjustThreshold { signature: flagged[1].violated_signature.unwrap(), threshold: 6.5 },
    ];
    if let Some(d) = flagged[2].deviant_features.first() {
        ops.push(RetuneOp::WhitelistValue { signature: flagged[2].violated_signature.unwrap(), feature: d.feature.clone(), value: d.observed.clone() });
    }
    let acl_sigs: Vec<_> = live.set.signatures.iter().filter(|s| s.kind == PropertyKind::Acl).map(|s| s.id).collect();
    ops.push(RetuneOp::MergeSignatures { a: acl_sigs[0], b: acl_sigs[1] });
    for op in ops {
        let g = live.generation();
        live.apply(RetuneAction { generation: g, action: op, author: "acceptance".into(), timestamp: DateTime::UNIX_EPOCH, note: None }).expect("action applies");
    }
    let replayed = replay(&live.log, &base, &live.bundle.corpus).expect("replay");
    if replayed.to_json() != live.set.to_json() {
        return check(false, "in-process replay differs from live signatures.json");
    }
    let log_path = dir.path().join("recorded.jsonl");
    fs::write(&log_path, live.log.to_jsonl()).expect("log written");
    assert_eq!(netsig(&["retune", "apply", "--log", p(&log_path), "--state", p(&a)]), 0);
    if fs::read_to_string(a.join(SIGNATURES_FILE)).expect("written") != live.set.to_json() {
        return check(false, "CLI replay differs from live signatures.json");
    }

    // service actions replayed through the CLI
    let served = Session::analyze(&snap_dir, AnalyzeOptions::default()).expect("analyze");
    let g0 = served.generation();
    let targets: Vec<Finding> = served.findings.iter().filter(|f| f.violated_signature.is_some()).skip(5).take(3).cloned().collect();
    let app = router(Arc::new(AppState { session: tokio::sync::RwLock::new(served), state_dir: None }), None);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
    let (served_findings, log) = rt.block_on(async {
        for (g, f) in targets.iter().enumerate() {
            let body = json!({"generation": g0 + g as u64, "action": {"type": "suppress_finding", "property": f.property_id, "signature": f.violated_signature}});
            let (st, _) = call(&app, "POST", "/api/retune", Some(body.to_string())).await;
            assert_eq!(st, StatusCode::OK);
        }
        let stale = json!({"generation": g0, "action": {"type": "adjust_threshold", "signature": targets[0].violated_signature, "threshold": 9.0}});
        assert_eq!(call(&app, "POST", "/api/retune", Some(stale.to_string())).await.0, StatusCode::CONFLICT);
        let (_, page) = call(&app, "GET", "/api/findings?limit=10000", None).await;
        let (_, log) = call(&app, "GET", "/api/retune/log", None).await;
        (page["findings"].clone(), log)
    });
    let mut served_log = RetuneLog::new(log["base_generation"].as_u64().expect("base generation"));
    served_log.actions = serde_json::from_value(log["actions"].clone()).expect("actions parse");
    fs::write(&log_path, served_log.to_jsonl()).expect("log written");
    assert_eq!(netsig(&["retune", "apply", "--log", p(&log_path), "--state", p(&b)]), 0);
    let cli_findings: Vec<Value> = fs::read_to_string(b.join(FINDINGS_FILE))
        .expect("written")
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).expect("finding line"))
        .collect();
    check(
        Value::Array(cli_findings) == served_findings,
        format!("analyze x2 byte-identical; {} live actions replay byte-identically; 3 served actions replayed by CLI give identical findings", live.log.actions.len()),
    )
}

fn c8_sankey_conservation() -> Outcome {
    let mut checked = 0;
    let mut corpora: Vec<(AnalysisBundle, Option<GroundTruth>)> =
        vec![(AnalysisBundle::build(load_snapshot(&core_fixtures().join("snapshot")).expect("fixture loads")).expect("encodes"), None)];
    for (nodes, seed) in [(150, 7), (40, 1), (60, 2), (90, 3)] {
        let (snap, truth) = generate_corpus(&CorpusSpec { node_count: nodes, seed, ..CorpusSpec::default() }).expect("generates");
        corpora.push((AnalysisBundle::build(snap).expect("encodes"), Some(truth)));
    }
    for (bundle, truth) in &corpora {
        let set = mine_signatures(&bundle.corpus, &MiningParams::default()).expect("mining succeeds");
        for method in Method::ALL {
            let findings = run_detector(&DetectorConfig::with_method(method), bundle, Some(&set)).expect("detection succeeds");
            let labeled: Vec<Finding> = match truth {
                Some(t) => findings.into_iter().filter(|f| t.labels.contains_key(&f.property_id)).collect(),
                None => findings,
            };
            let totals = build_sankey(&labeled).layer_totals();
            if totals != [labeled.len(); 3] {
                return check(false, format!("{method}: layer totals {totals:?} vs {} labeled findings", labeled.len()));
            }
            checked += 1;
        }
    }
    ok(format!("{checked} corpus/detector combinations conserve flow"))
}

fn peak_rss_mib() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib / 1024.0)
}

fn c9_scale() -> Outcome {
    let start = Instant::now();
    let (snap, truth) = generate_corpus(&CorpusSpec { node_count: 450, ..CorpusSpec::default() }).expect("generates");
    let bundle = AnalysisBundle::build(snap).expect("encodes");
    let set = mine_signatures(&bundle.corpus, &MiningParams::default()).expect("mining succeeds");
    let mut findings = run_detector(&DetectorConfig::default(), &bundle, Some(&set)).expect("detection succeeds");
    apply_severity(&mut findings, &bundle.graph, &SeverityWeights::default()).expect("severity applies");
    let m = compute_metrics(&findings, &truth);
    let elapsed = start.elapsed();
    let peak = peak_rss_mib().unwrap_or(f64::NAN);
    check(
        elapsed < Duration::from_secs(600) && peak < 2048.0,
        format!("{} properties in {elapsed:.2?}; peak RSS {peak:.0} MiB; precision {}", bundle.properties.len(), m.precision),
    )
}
