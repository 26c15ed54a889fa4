//! Typed properties extracted from a snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::grammar::{
    self, AclRule, Endpoint, InterfaceSetting, NeighborSetting, PolicyClause, RouteFilterRule, VrfSetting,
};
use crate::ingest::{LineSpan, NetworkSnapshot, Stanza, StanzaKind};

/// The four analysed property kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyKind {
    Acl,
    RouteFilter,
    Vrf,
    RoutingPolicy,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 4] =
        [PropertyKind::Acl, PropertyKind::RouteFilter, PropertyKind::Vrf, PropertyKind::RoutingPolicy];

    pub fn stanza_kind(self) -> StanzaKind {
        match self {
            PropertyKind::Acl => StanzaKind::Acl,
            PropertyKind::RouteFilter => StanzaKind::RouteFilter,
            PropertyKind::Vrf => StanzaKind::Vrf,
            PropertyKind::RoutingPolicy => StanzaKind::RoutingPolicy,
        }
    }

    pub fn from_stanza_kind(kind: StanzaKind) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.stanza_kind() == kind)
    }

    pub fn keyword(self) -> &'static str {
        self.stanza_kind().keyword()
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for PropertyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StanzaKind::from_keyword(s)
            .and_then(Self::from_stanza_kind)
            .ok_or_else(|| format!("unknown property kind `{s}`"))
    }
}

/// `device/kind/name`. Identifies any config object, properties included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

pub type PropertyId = ObjectId;

impl ObjectId {
    pub fn new(device: &str, kind: StanzaKind, name: &str) -> Self {
        ObjectId(format!("{device}/{}/{name}", kind.keyword()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "value")]
pub enum AttrValue {
    Number(f64),
    Token(String),
    TokenSet(BTreeSet<String>),
    Prefix(Ipv4Net),
    PrefixList(Vec<Ipv4Net>),
    AclRules(Vec<AclRule>),
    RouteFilterRules(Vec<RouteFilterRule>),
    Clauses(Vec<PolicyClause>),
}

/// A name used by one object to point at another.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reference {
    pub target: StanzaKind,
    pub name: String,
    /// Source line of the referencing entry.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: PathBuf,
    pub lines: LineSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub id: PropertyId,
    pub kind: PropertyKind,
    pub device: String,
    pub name: String,
    pub attributes: BTreeMap<String, AttrValue>,
    pub source: SourceSpan,
    pub references: Vec<Reference>,
}

impl Property {
    pub fn acl_rules(&self) -> &[AclRule] {
        match self.attributes.get("rules") {
            Some(AttrValue::AclRules(r)) => r,
            _ => &[],
        }
    }

    pub fn route_filter_rules(&self) -> &[RouteFilterRule] {
        match self.attributes.get("rules") {
            Some(AttrValue::RouteFilterRules(r)) => r,
            _ => &[],
        }
    }

    pub fn clauses(&self) -> &[PolicyClause] {
        match self.attributes.get("clauses") {
            Some(AttrValue::Clauses(c)) => c,
            _ => &[],
        }
    }

    pub fn token(&self, attr: &str) -> Option<&str> {
        match self.attributes.get(attr) {
            Some(AttrValue::Token(t)) => Some(t),
            _ => None,
        }
    }

    pub fn token_set(&self, attr: &str) -> Option<&BTreeSet<String>> {
        match self.attributes.get(attr) {
            Some(AttrValue::TokenSet(t)) => Some(t),
            _ => None,
        }
    }

    pub fn number(&self, attr: &str) -> Option<f64> {
        match self.attributes.get(attr) {
            Some(AttrValue::Number(n)) => Some(*n),
            _ => None,
        }
    }
}

fn entries_parsed<'a, T>(
    stanza: &'a Stanza,
    parse: impl Fn(&[&str]) -> Result<T, String> + 'a,
) -> impl Iterator<Item = (usize, T)> + 'a {
    stanza
        .entries
        .iter()
        .zip(&stanza.entry_lines)
        .filter_map(move |(e, line)| parse(&e.token_vec()).ok().map(|v| (*line, v)))
}

/// Outgoing references of any stanza, in entry order.
pub fn stanza_references(stanza: &Stanza) -> Vec<Reference> {
    let r = |target, name: &str, line| Reference { target, name: name.to_owned(), line };
    let mut out = Vec::new();
    match stanza.kind {
        StanzaKind::Acl => {
            for (line, rule) in entries_parsed(stanza, grammar::parse_acl_rule) {
                for ep in [&rule.src, &rule.dst] {
                    if let Endpoint::PrefixList(name) = ep {
                        out.push(r(StanzaKind::RouteFilter, name, line));
                    }
                }
            }
        }
        StanzaKind::RouteFilter => {}
        StanzaKind::Vrf => {
            for (line, s) in entries_parsed(stanza, grammar::parse_vrf_setting) {
                if let VrfSetting::ImportPolicy(n) | VrfSetting::ExportPolicy(n) = &s {
                    out.push(r(StanzaKind::RoutingPolicy, n, line));
                }
            }
        }
        StanzaKind::RoutingPolicy => {
            for (line, c) in entries_parsed(stanza, grammar::parse_policy_clause) {
                match &c {
                    PolicyClause::MatchAcl(n) => out.push(r(StanzaKind::Acl, n, line)),
                    PolicyClause::MatchRouteFilter(n) => out.push(r(StanzaKind::RouteFilter, n, line)),
                    _ => {}
                }
            }
        }
        StanzaKind::Interface => {
            for (line, s) in entries_parsed(stanza, grammar::parse_interface_setting) {
                match &s {
                    InterfaceSetting::Vrf(n) => out.push(r(StanzaKind::Vrf, n, line)),
                    InterfaceSetting::AclIn(n) | InterfaceSetting::AclOut(n) => out.push(r(StanzaKind::Acl, n, line)),
                    _ => {}
                }
            }
        }
        StanzaKind::BgpNeighbor => {
            for (line, s) in entries_parsed(stanza, grammar::parse_neighbor_setting) {
                match &s {
                    NeighborSetting::ImportPolicy(n) | NeighborSetting::ExportPolicy(n) => {
                        out.push(r(StanzaKind::RoutingPolicy, n, line))
                    }
                    NeighborSetting::Vrf(n) => out.push(r(StanzaKind::Vrf, n, line)),
                    NeighborSetting::UpdateSource(n) => out.push(r(StanzaKind::Interface, n, line)),
                    _ => {}
                }
            }
        }
    }
    out
}

fn attributes(stanza: &Stanza) -> BTreeMap<String, AttrValue> {
    let mut attrs = BTreeMap::new();
    match stanza.kind {
        StanzaKind::Acl => {
            let rules = entries_parsed(stanza, grammar::parse_acl_rule).map(|(_, r)| r).collect();
            attrs.insert("rules".to_owned(), AttrValue::AclRules(rules));
        }
        StanzaKind::RouteFilter => {
            let rules: Vec<RouteFilterRule> =
                entries_parsed(stanza, grammar::parse_route_filter_rule).map(|(_, r)| r).collect();
            attrs.insert("prefixes".to_owned(), AttrValue::PrefixList(rules.iter().map(|r| r.prefix).collect()));
            attrs.insert("rules".to_owned(), AttrValue::RouteFilterRules(rules));
        }
        StanzaKind::Vrf => {
            let mut sets: BTreeMap<&str, BTreeSet<String>> = [
                ("import_targets", BTreeSet::new()),
                ("export_targets", BTreeSet::new()),
                ("import_policies", BTreeSet::new()),
                ("export_policies", BTreeSet::new()),
            ]
            .into_iter()
            .collect();
            for (_, s) in entries_parsed(stanza, grammar::parse_vrf_setting) {
                let (set, v) = match s {
                    VrfSetting::Rd(v) => {
                        attrs.insert("rd".to_owned(), AttrValue::Token(v));
                        continue;
                    }
                    VrfSetting::MaxRoutes(n) => {
                        attrs.insert("max_routes".to_owned(), AttrValue::Number(f64::from(n)));
                        continue;
                    }
                    VrfSetting::Description(d) => {
                        attrs.insert("description".to_owned(), AttrValue::Token(d));
                        continue;
                    }
                    VrfSetting::ImportTarget(v) => ("import_targets", v),
                    VrfSetting::ExportTarget(v) => ("export_targets", v),
                    VrfSetting::ImportPolicy(v) => ("import_policies", v),
                    VrfSetting::ExportPolicy(v) => ("export_policies", v),
                };
                sets.get_mut(set).expect("declared above").insert(v);
            }
            for (k, v) in sets {
                attrs.insert(k.to_owned(), AttrValue::TokenSet(v));
            }
        }
        StanzaKind::RoutingPolicy => {
            let clauses = entries_parsed(stanza, grammar::parse_policy_clause).map(|(_, c)| c).collect();
            attrs.insert("clauses".to_owned(), AttrValue::Clauses(clauses));
        }
        StanzaKind::Interface | StanzaKind::BgpNeighbor => {}
    }
    attrs
}

/// One property per acl / route-filter / vrf / routing-policy stanza, in
/// device order then file order.
pub fn extract_properties(snapshot: &NetworkSnapshot) -> Vec<Property> {
    let mut out = Vec::new();
    for dev in snapshot.devices.values() {
        for stanza in &dev.stanzas {
            let Some(kind) = PropertyKind::from_stanza_kind(stanza.kind) else {
                continue;
            };
            out.push(Property {
                id: ObjectId::new(&dev.device_name, stanza.kind, &stanza.name),
                kind,
                device: dev.device_name.clone(),
                name: stanza.name.clone(),
                attributes: attributes(stanza),
                source: SourceSpan { file: dev.source_path.clone(), lines: stanza.lines },
                references: stanza_references(stanza),
            });
        }
    }
    out
}
