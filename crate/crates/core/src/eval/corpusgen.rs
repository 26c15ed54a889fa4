//! Labeled synthetic network generator.
//!
//! Every kind has a set of templates. The first half are *shared*: one
//! instance per device, same name everywhere. The rest are *indexed*:
//! several instances per device, named `STEM_<node>_<k>`. Some templates
//! get small benign jitter in their rule counts. Bugs and benign variants
//! are then planted on distinct instances and recorded in the ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::ProblemType;
use crate::ingest::{parse_config, IngestError, NetworkSnapshot};
use crate::properties::{ObjectId, PropertyId, PropertyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub node_count: usize,
    pub properties_per_node: BTreeMap<PropertyKind, usize>,
    pub template_count: BTreeMap<PropertyKind, usize>,
    /// Fraction of all properties receiving each bug type.
    pub bug_injection: BTreeMap<ProblemType, f64>,
    /// Fraction of properties given a harmless but unusual shape.
    pub benign_variant_rate: f64,
    /// Largest rule-count jitter on jittered templates.
    pub jitter: u32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            node_count: 150,
            properties_per_node: BTreeMap::from([
                (PropertyKind::Acl, 12),
                (PropertyKind::RouteFilter, 16),
                (PropertyKind::Vrf, 4),
                (PropertyKind::RoutingPolicy, 8),
            ]),
            template_count: BTreeMap::from([
                (PropertyKind::Acl, 6),
                (PropertyKind::RouteFilter, 6),
                (PropertyKind::Vrf, 3),
                (PropertyKind::RoutingPolicy, 5),
            ]),
            bug_injection: BTreeMap::from([
                (ProblemType::UndefinedReference, 0.0125),
                (ProblemType::DeviantAttributeValue, 0.0125),
                (ProblemType::InconsistentAcrossDevices, 0.0125),
                (ProblemType::ShadowedRule, 0.0125),
            ]),
            benign_variant_rate: 0.01,
            jitter: 2,
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn clean(mut self) -> Self {
        self.bug_injection.values_mut().for_each(|r| *r = 0.0);
        self.benign_variant_rate = 0.0;
        self
    }

    pub fn per_node(&self, kind: PropertyKind) -> usize {
        self.properties_per_node.get(&kind).copied().unwrap_or(0)
    }

    pub fn templates(&self, kind: PropertyKind) -> usize {
        self.template_count.get(&kind).copied().unwrap_or(0)
    }

    pub fn total_properties(&self) -> usize {
        self.node_count * PropertyKind::ALL.iter().map(|k| self.per_node(*k)).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InfeasibleSpec(m));
        if self.node_count == 0 {
            return bad("node_count must be at least 1".into());
        }
        for kind in PropertyKind::ALL {
            let (p, t) = (self.per_node(kind), self.templates(kind));
            if t > p {
                return bad(format!("{kind}: {t} templates but only {p} properties per node"));
            }
            if p > 0 && t == 0 {
                return bad(format!("{kind}: properties requested without templates"));
            }
        }
        let rates = self.bug_injection.values().chain([&self.benign_variant_rate]);
        let mut total = 0.0;
        for &r in rates {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("rate {r} outside [0, 1]"));
            }
            total += r;
        }
        if total > 1.0 {
            return bad(format!("injection rates sum to {total} > 1"));
        }
        if self.bug_injection.contains_key(&ProblemType::Unknown) {
            return bad("Unknown is not an injectable problem type".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("infeasible corpus spec: {0}")]
    InfeasibleSpec(String),
    #[error("not enough eligible properties for {kind:?} bugs: need {need}, have {have}")]
    NotEnoughCandidates { kind: ProblemType, need: usize, have: usize },
    #[error("generated config failed to parse: {0}")]
    Internal(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot write corpus: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", content = "problem_type", rename_all = "snake_case")]
pub enum Label {
    Clean,
    Buggy(ProblemType),
}

impl Label {
    pub fn is_buggy(self) -> bool {
        matches!(self, Label::Buggy(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub labels: BTreeMap<PropertyId, Label>,
    pub injected_count: BTreeMap<ProblemType, usize>,
    /// Generator template of every property; the clustering oracle.
    pub templates: BTreeMap<PropertyId, String>,
    /// Properties given a benign variant; labeled clean.
    pub benign_variants: BTreeSet<PropertyId>,
}

impl GroundTruth {
    pub fn label(&self, id: &PropertyId) -> Label {
        self.labels.get(id).copied().unwrap_or(Label::Clean)
    }

    pub fn buggy(&self) -> impl Iterator<Item = (&PropertyId, ProblemType)> {
        self.labels.iter().filter_map(|(id, l)| match l {
            Label::Buggy(p) => Some((id, *p)),
            Label::Clean => None,
        })
    }

    pub fn bug_count(&self) -> usize {
        self.buggy().count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// Template shapes -----------------------------------------------------------

#[derive(Debug, Clone)]
struct AclTemplate {
    /// (proto, port) of each leading permit; the source net is derived per slot
    permits: Vec<(&'static str, u16)>,
    denies: usize,
    final_action: &'static str,
}

#[derive(Debug, Clone)]
struct RfTemplate {
    /// (prefix len, optional le) of each permit
    permits: Vec<(u8, Option<u8>)>,
    final_action: &'static str,
}

#[derive(Debug, Clone)]
struct VrfTemplate {
    import_targets: usize,
    export_targets: usize,
    import_policy: Option<String>,
    export_policy: Option<String>,
    max_routes: u32,
}

#[derive(Debug, Clone)]
struct RpTemplate {
    match_acl: Option<String>,
    match_rf: Option<String>,
    local_pref: Option<u32>,
    med: Option<u32>,
    communities: usize,
    final_action: &'static str,
}

#[derive(Debug, Clone)]
enum Shape {
    Acl(AclTemplate),
    Rf(RfTemplate),
    Vrf(VrfTemplate),
    Rp(RpTemplate),
}

#[derive(Debug, Clone)]
struct Template {
    kind: PropertyKind,
    stem: String,
    shared: bool,
    jittered: bool,
    shape: Shape,
}

const WORDS: [&str; 12] = ["MGMT", "EDGE", "CORE", "PEER", "CUST", "TRANSIT", "INFRA", "VOICE", "GUEST", "DMZ", "BACKUP", "LAB"];

fn stem(kind: PropertyKind, t: usize) -> String {
    let prefix = match kind {
        PropertyKind::Acl => "ACL",
        PropertyKind::RouteFilter => "PL",
        PropertyKind::Vrf => "VRF",
        PropertyKind::RoutingPolicy => "RP",
    };
    let mut s = format!("{prefix}_{}", WORDS[t % WORDS.len()]);
    for _ in 0..t / WORDS.len() {
        s.push_str("_X");
    }
    s
}

/// One planned instance of a template on a device.
#[derive(Debug, Clone)]
struct Instance {
    template: usize,
    name: String,
    /// extra plain rules on jittered templates
    jitter: u32,
    mutation: Mutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mutation {
    None,
    Bug(ProblemType),
    Benign,
}

struct Plan {
    templates: Vec<Template>,
    /// device index → instances in emission order
    devices: Vec<Vec<Instance>>,
    shared: BTreeMap<PropertyKind, Vec<usize>>,
}

fn build_templates(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> (Vec<Template>, BTreeMap<PropertyKind, Vec<usize>>) {
    let mut templates = Vec::new();
    let mut shared: BTreeMap<PropertyKind, Vec<usize>> = BTreeMap::new();
    // acls and route filters first so policies can reference shared ones
    for kind in PropertyKind::ALL {
        let t_count = spec.templates(kind);
        let n_shared = t_count / 2;
        for t in 0..t_count {
            let is_shared = t < n_shared;
            let jittered = spec.jitter > 0 && matches!(kind, PropertyKind::Acl | PropertyKind::RouteFilter) && t % 2 == 1;
            let shared_of = |k: PropertyKind, shared: &BTreeMap<PropertyKind, Vec<usize>>, templates: &Vec<Template>, pick: usize| {
                shared.get(&k).filter(|v| !v.is_empty()).map(|v| templates[v[pick % v.len()]].stem.clone())
            };
            let shape = match kind {
                PropertyKind::Acl => {
                    // one large shared template gives the kind a heavy tail
                    let n = if t == 0 { rng.random_range(30..=40) } else { rng.random_range(5..=9) };
                    let protos = [("tcp", 22u16), ("tcp", 443), ("udp", 53), ("tcp", 179), ("udp", 123), ("tcp", 80)];
                    let permits = (0..n).map(|_| protos[rng.random_range(0..protos.len())]).collect();
                    Shape::Acl(AclTemplate {
                        permits,
                        denies: rng.random_range(0..=2),
                        final_action: if t % 3 == 2 { "permit" } else { "deny" },
                    })
                }
                PropertyKind::RouteFilter => {
                    let n = if t == 0 { rng.random_range(30..=45) } else { rng.random_range(5..=10) };
                    let permits = (0..n)
                        .map(|_| {
                            let len = rng.random_range(16..=24u8);
                            (len, if rng.random_bool(0.5) { Some(len + rng.random_range(1..=4u8)) } else { None })
                        })
                        .collect();
                    Shape::Rf(RfTemplate { permits, final_action: "deny" })
                }
                PropertyKind::Vrf => Shape::Vrf(VrfTemplate {
                    import_targets: rng.random_range(1..=3),
                    export_targets: rng.random_range(1..=2),
                    import_policy: None,
                    export_policy: None,
                    max_routes: [1000, 5000, 10000, 20000][rng.random_range(0..4)],
                }),
                PropertyKind::RoutingPolicy => Shape::Rp(RpTemplate {
                    match_acl: shared_of(PropertyKind::Acl, &shared, &templates, t),
                    match_rf: shared_of(PropertyKind::RouteFilter, &shared, &templates, t),
                    local_pref: rng.random_bool(0.7).then(|| [90, 100, 150, 200][rng.random_range(0..4)]),
                    med: rng.random_bool(0.5).then(|| rng.random_range(1..=5) * 10),
                    communities: rng.random_range(0..=2),
                    final_action: if t % 4 == 3 { "deny" } else { "permit" },
                }),
            };
            if is_shared {
                shared.entry(kind).or_default().push(templates.len());
            }
            templates.push(Template { kind, stem: stem(kind, t), shared: is_shared, jittered, shape });
        }
    }
    // vrfs reference shared policies, assigned once policies exist
    let rps = shared.get(&PropertyKind::RoutingPolicy).cloned().unwrap_or_default();
    let rp_names: Vec<String> = rps.iter().map(|&i| templates[i].stem.clone()).collect();
    for (t, tpl) in templates.iter_mut().filter(|t| t.kind == PropertyKind::Vrf).enumerate() {
        if let Shape::Vrf(v) = &mut tpl.shape {
            if !rp_names.is_empty() {
                v.import_policy = Some(rp_names[t % rp_names.len()].clone());
                v.export_policy = (t % 2 == 0).then(|| rp_names[(t + 1) % rp_names.len()].clone());
            }
        }
    }
    (templates, shared)
}

fn device_name(node: usize) -> String {
    format!("r{:03}", node + 1)
}

fn plan(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Plan {
    let (templates, shared) = build_templates(spec, rng);
    let mut devices = Vec::with_capacity(spec.node_count);
    for node in 0..spec.node_count {
        let mut insts = Vec::new();
        for kind in PropertyKind::ALL {
            let ids: Vec<usize> = (0..templates.len()).filter(|&i| templates[i].kind == kind).collect();
            let shared_ids: Vec<usize> = ids.iter().copied().filter(|&i| templates[i].shared).collect();
            let indexed_ids: Vec<usize> = ids.iter().copied().filter(|&i| !templates[i].shared).collect();
            for &t in &shared_ids {
                insts.push((t, templates[t].stem.clone()));
            }
            let rest = spec.per_node(kind) - shared_ids.len();
            for j in 0..rest {
                let t = indexed_ids[j % indexed_ids.len()];
                let k = j / indexed_ids.len() + 1;
                insts.push((t, format!("{}_{}_{}", templates[t].stem, node + 1, k)));
            }
        }
        let planned = insts
            .into_iter()
            .map(|(t, name)| {
                let jitter = if templates[t].jittered { rng.random_range(0..=2 * spec.jitter) } else { 0 };
                Instance { template: t, name, jitter, mutation: Mutation::None }
            })
            .collect();
        devices.push(planned);
    }
    Plan { templates, devices, shared }
}

fn eligible(t: &Template, bug: ProblemType) -> bool {
    match bug {
        ProblemType::UndefinedReference => match &t.shape {
            Shape::Rp(r) => r.match_acl.is_some() || r.match_rf.is_some(),
            Shape::Vrf(v) => v.import_policy.is_some(),
            _ => false,
        },
        ProblemType::DeviantAttributeValue => true,
        ProblemType::InconsistentAcrossDevices => t.shared,
        ProblemType::ShadowedRule => matches!(t.shape, Shape::Acl(_)),
        ProblemType::Unknown => false,
    }
}

fn inject(spec: &CorpusSpec, plan: &mut Plan, rng: &mut ChaCha8Rng) -> Result<(), GenError> {
    let total = spec.total_properties();
    let mut slots: Vec<(usize, usize)> =
        plan.devices.iter().enumerate().flat_map(|(d, insts)| (0..insts.len()).map(move |i| (d, i))).collect();
    slots.shuffle(rng);
    let mut taken = vec![false; slots.len()];
    // rarest eligibility first so broad types cannot starve narrow ones
    let order = [
        ProblemType::UndefinedReference,
        ProblemType::ShadowedRule,
        ProblemType::InconsistentAcrossDevices,
        ProblemType::DeviantAttributeValue,
    ];
    let mut wanted: Vec<(Mutation, usize)> = order
        .iter()
        .map(|&p| (Mutation::Bug(p), (spec.bug_injection.get(&p).copied().unwrap_or(0.0) * total as f64).round() as usize))
        .collect();
    wanted.push((Mutation::Benign, (spec.benign_variant_rate * total as f64).round() as usize));
    for (m, need) in wanted {
        let mut got = 0;
        for (k, &(d, i)) in slots.iter().enumerate() {
            if got == need {
                break;
            }
            let inst = &plan.devices[d][i];
            let ok = match m {
                Mutation::Bug(p) => eligible(&plan.templates[inst.template], p),
                _ => true,
            };
            if ok && !taken[k] {
                taken[k] = true;
                plan.devices[d][i].mutation = m;
                got += 1;
            }
        }
        if got < need {
            let kind = match m {
                Mutation::Bug(p) => p,
                _ => ProblemType::Unknown,
            };
            return Err(GenError::NotEnoughCandidates { kind, need, have: got });
        }
    }
    Ok(())
}

// Rendering -----------------------------------------------------------------

fn net(a: usize, b: usize, len: u8) -> String {
    format!("10.{}.{}.0/{}", a % 256, b % 256, len.min(24))
}

/// Route-filter prefixes vary in the second octet so /16s stay distinct.
fn rf_net(a: usize, b: usize, len: u8) -> String {
    format!("{}.{}.0.0/{}", 100 + a % 150, b % 256, len.max(16))
}

/// Reference names get a form no template produces, so they never resolve.
fn broken_name(name: &str) -> String {
    format!("{}-old", name.to_lowercase().replace('_', "-"))
}

fn render_acl(out: &mut String, name: &str, t: &AclTemplate, tid: usize, inst: &Instance) {
    let _ = writeln!(out, "acl {name}");
    let n = t.permits.len();
    let mut rules: Vec<String> = t
        .permits
        .iter()
        .enumerate()
        .map(|(i, (proto, port))| format!("permit {proto} {} any eq {port}", net(tid, i, 24)))
        .collect();
    rules.extend((0..inst.jitter as usize).map(|i| format!("permit tcp {} any eq 22", net(tid, 100 + i, 24))));
    let mut denies: Vec<String> = (0..t.denies).map(|j| format!("deny ip {} any", net(tid + 100, j, 24))).collect();
    let final_rule = |a: &str| format!("{a} ip any any");
    let mut final_action = t.final_action.to_owned();
    match inst.mutation {
        Mutation::Bug(ProblemType::DeviantAttributeValue) => {
            rules.extend((n..n + 6).map(|i| format!("permit tcp {} any eq 8080", net(tid, i, 24))));
        }
        Mutation::Bug(ProblemType::InconsistentAcrossDevices) => {
            final_action = if t.final_action == "deny" { "permit".into() } else { "deny".into() };
        }
        Mutation::Bug(ProblemType::ShadowedRule) => {
            // an opposite-action copy of the first rule, inside the permit run
            let shadow = rules[0].replacen("permit", "deny", 1);
            rules.insert(1.min(rules.len()), shadow);
            if rules.len() == 2 {
                rules.push(format!("permit tcp {} any eq 8443", net(tid, 200, 24)));
            }
        }
        Mutation::Benign => {
            rules.extend((0..5).map(|i| format!("permit udp {} any eq 514", net(tid, 200 + i, 24))));
        }
        _ => {}
    }
    rules.append(&mut denies);
    rules.push(final_rule(&final_action));
    for r in rules {
        let _ = writeln!(out, " {r}");
    }
}

fn render_rf(out: &mut String, name: &str, t: &RfTemplate, tid: usize, inst: &Instance) {
    let _ = writeln!(out, "route-filter {name}");
    let n = t.permits.len();
    let mut rules: Vec<String> = (0..n)
        .map(|i| {
            let (len, le) = t.permits[i];
            let mut r = format!("permit {}", rf_net(tid, i, len));
            if let Some(le) = le {
                let _ = write!(r, " le {le}");
            }
            r
        })
        .collect();
    rules.extend((0..inst.jitter as usize).map(|i| format!("permit {}", rf_net(tid, 100 + i, 24))));
    let mut final_action = t.final_action;
    match inst.mutation {
        Mutation::Bug(ProblemType::DeviantAttributeValue) => {
            rules.extend((n..n + 6).map(|i| format!("permit {} le 32", rf_net(tid, i, 24))));
        }
        Mutation::Bug(ProblemType::InconsistentAcrossDevices) => {
            final_action = if final_action == "deny" { "permit" } else { "deny" };
        }
        Mutation::Benign => {
            rules.extend((0..5).map(|i| format!("permit {}", rf_net(tid, 200 + i, 24))));
        }
        _ => {}
    }
    rules.push(format!("{final_action} 0.0.0.0/0 le 32"));
    for r in rules {
        let _ = writeln!(out, " {r}");
    }
}

fn render_vrf(out: &mut String, name: &str, t: &VrfTemplate, node: usize, tid: usize, inst: &Instance) {
    let _ = writeln!(out, "vrf {name}");
    let mut asn = 65000;
    let mut max_routes = t.max_routes;
    let mut import = t.import_policy.clone();
    let mut import_targets = t.import_targets;
    match inst.mutation {
        Mutation::Bug(ProblemType::UndefinedReference) => import = import.map(|n| broken_name(&n)),
        Mutation::Bug(ProblemType::DeviantAttributeValue) => max_routes *= 10,
        Mutation::Bug(ProblemType::InconsistentAcrossDevices) => asn = 64999,
        Mutation::Benign => import_targets += 3,
        _ => {}
    }
    let _ = writeln!(out, " rd {asn}:{}", node + 1);
    for i in 0..import_targets {
        let _ = writeln!(out, " import-target 65000:{}", tid * 10 + i);
    }
    for i in 0..t.export_targets {
        let _ = writeln!(out, " export-target 65000:{}", tid * 10 + i);
    }
    if let Some(p) = import {
        let _ = writeln!(out, " import-policy {p}");
    }
    if let Some(p) = &t.export_policy {
        let _ = writeln!(out, " export-policy {p}");
    }
    let _ = writeln!(out, " max-routes {max_routes}");
}

fn render_rp(out: &mut String, name: &str, t: &RpTemplate, inst: &Instance) {
    let _ = writeln!(out, "routing-policy {name}");
    let (mut acl, mut rf) = (t.match_acl.clone(), t.match_rf.clone());
    let mut local_pref = t.local_pref;
    let mut final_action = t.final_action;
    let mut communities = t.communities;
    match inst.mutation {
        Mutation::Bug(ProblemType::UndefinedReference) => {
            if rf.is_some() {
                rf = rf.map(|n| broken_name(&n));
            } else {
                acl = acl.map(|n| broken_name(&n));
            }
        }
        Mutation::Bug(ProblemType::DeviantAttributeValue) => local_pref = Some(local_pref.map_or(500, |v| v * 5)),
        Mutation::Bug(ProblemType::InconsistentAcrossDevices) => {
            final_action = if final_action == "permit" { "deny" } else { "permit" };
        }
        Mutation::Benign => communities += 3,
        _ => {}
    }
    if let Some(a) = acl {
        let _ = writeln!(out, " match acl {a}");
    }
    if let Some(f) = rf {
        let _ = writeln!(out, " match route-filter {f}");
    }
    if let Some(lp) = local_pref {
        let _ = writeln!(out, " set local-preference {lp}");
    }
    if let Some(m) = t.med {
        let _ = writeln!(out, " set med {m}");
    }
    for c in 0..communities {
        let _ = writeln!(out, " set community 65000:{}", 500 + c);
    }
    let _ = writeln!(out, " action {final_action}");
}

fn render_device(plan: &Plan, node: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", device_name(node));
    for inst in &plan.devices[node] {
        let t = &plan.templates[inst.template];
        match &t.shape {
            Shape::Acl(a) => render_acl(&mut out, &inst.name, a, inst.template, inst),
            Shape::Rf(r) => render_rf(&mut out, &inst.name, r, inst.template, inst),
            Shape::Vrf(v) => render_vrf(&mut out, &inst.name, v, node, inst.template, inst),
            Shape::Rp(r) => render_rp(&mut out, &inst.name, r, inst),
        }
    }
    // reference targets: interfaces use acls and vrfs, neighbors use policies
    let names = |k: PropertyKind| -> Vec<&str> {
        plan.shared.get(&k).map(|v| v.iter().map(|&i| plan.templates[i].stem.as_str()).collect()).unwrap_or_default()
    };
    let (acls, vrfs, rps) = (names(PropertyKind::Acl), names(PropertyKind::Vrf), names(PropertyKind::RoutingPolicy));
    let n_if = 2 + node % 3;
    for i in 0..n_if {
        let _ = writeln!(out, "interface eth{i}");
        let _ = writeln!(out, " address 172.16.{}.{}/31", node % 256, i * 2);
        if !acls.is_empty() {
            let _ = writeln!(out, " acl-in {}", acls[(node + i) % acls.len()]);
        }
        if !vrfs.is_empty() && i % 2 == 0 {
            let _ = writeln!(out, " vrf {}", vrfs[(node / 2 + i) % vrfs.len()]);
        }
    }
    if !rps.is_empty() {
        for j in 0..2 {
            let _ = writeln!(out, "bgp-neighbor peer{j}");
            let _ = writeln!(out, " remote-as {}", 64512 + j);
            let _ = writeln!(out, " import-policy {}", rps[(node + j) % rps.len()]);
            let _ = writeln!(out, " update-source eth0");
        }
    }
    out
}

/// A generated network: per-device config text plus labels.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    /// (device name, config text), in device order
    pub files: Vec<(String, String)>,
    pub truth: GroundTruth,
}

impl GeneratedCorpus {
    pub fn snapshot(&self) -> Result<NetworkSnapshot, GenError> {
        let devices = self
            .files
            .iter()
            .map(|(name, text)| {
                let mut d = parse_config(text, name).map_err(|e| GenError::Internal(format!("{name}: {e}")))?;
                d.source_path = format!("{name}.cfg").into();
                Ok(d)
            })
            .collect::<Result<Vec<_>, GenError>>()?;
        Ok(NetworkSnapshot::from_devices(devices)?)
    }

    /// Writes `<name>.cfg` for every device into `dir`.
    pub fn write_configs(&self, dir: &Path) -> Result<(), GenError> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(format!("{name}.cfg")), text)?;
        }
        Ok(())
    }
}

/// Generates a labeled corpus; deterministic in `spec.seed`.
pub fn generate(spec: &CorpusSpec) -> Result<GeneratedCorpus, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut plan = plan(spec, &mut rng);
    inject(spec, &mut plan, &mut rng)?;

    let mut labels = BTreeMap::new();
    let mut templates = BTreeMap::new();
    let mut benign = BTreeSet::new();
    let mut injected: BTreeMap<ProblemType, usize> = BTreeMap::new();
    for (node, insts) in plan.devices.iter().enumerate() {
        for inst in insts {
            let t = &plan.templates[inst.template];
            let id = ObjectId::new(&device_name(node), t.kind.stanza_kind(), &inst.name);
            let label = match inst.mutation {
                Mutation::Bug(p) => {
                    *injected.entry(p).or_insert(0) += 1;
                    Label::Buggy(p)
                }
                Mutation::Benign => {
                    benign.insert(id.clone());
                    Label::Clean
                }
                Mutation::None => Label::Clean,
            };
            templates.insert(id.clone(), t.stem.clone());
            labels.insert(id, label);
        }
    }
    let files = (0..spec.node_count).map(|n| (device_name(n), render_device(&plan, n))).collect();
    Ok(GeneratedCorpus {
        files,
        truth: GroundTruth { seed: spec.seed, labels, injected_count: injected, templates, benign_variants: benign },
    })
}

/// Convenience: generate and parse in one step.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<(NetworkSnapshot, GroundTruth), GenError> {
    let g = generate(spec)?;
    Ok((g.snapshot()?, g.truth))
}
