//! Fixed-schema vector encoding of properties.
//!
//! Every kind has a hand-designed schema of structural features. Numeric
//! features land in a dense `f64` array, categorical ones are interned
//! tokens. Values that cannot be computed become the `missing` token, never
//! NaN.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::{Action, Endpoint, PolicyClause};
use crate::properties::{Property, PropertyId, PropertyKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Token used for categorical values that could not be derived.
pub const MISSING: &str = "missing";
/// Token for an empty bag of tokens.
pub const EMPTY_BAG: &str = "(none)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureType {
    Numeric,
    Categorical,
    SetCardinality,
    BagOfTokens,
}

impl FeatureType {
    pub fn is_numeric(self) -> bool {
        matches!(self, FeatureType::Numeric | FeatureType::SetCardinality)
    }
}

/// What a deviation in this feature says about the property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationCategory {
    NumericDeviation,
    CategoricalDeviation,
    MissingReference,
    OrderAnomaly,
}

impl DeviationCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviationCategory::NumericDeviation => "numeric-deviation",
            DeviationCategory::CategoricalDeviation => "categorical-deviation",
            DeviationCategory::MissingReference => "missing-reference",
            DeviationCategory::OrderAnomaly => "order-anomaly",
        }
    }
}

impl fmt::Display for DeviationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Feature {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ftype: FeatureType,
    pub category: DeviationCategory,
    pub sources: &'static [&'static str],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    pub kind: PropertyKind,
    pub name: String,
    pub version: u32,
    pub features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn numeric_features(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter().filter(|f| f.ftype.is_numeric())
    }

    pub fn categorical_features(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter().filter(|f| !f.ftype.is_numeric())
    }

    pub fn numeric_len(&self) -> usize {
        self.numeric_features().count()
    }

    pub fn categorical_len(&self) -> usize {
        self.categorical_features().count()
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }
}

const fn feat(
    name: &'static str,
    ftype: FeatureType,
    category: DeviationCategory,
    sources: &'static [&'static str],
) -> Feature {
    Feature { name, ftype, category, sources }
}

use DeviationCategory::{CategoricalDeviation as Cat, MissingReference as Ref, NumericDeviation as Num, OrderAnomaly as Order};
use FeatureType::{BagOfTokens, Categorical, Numeric, SetCardinality};

/// The built-in schema for `kind`.
pub fn feature_schema(kind: PropertyKind) -> FeatureSchema {
    let features = match kind {
        PropertyKind::Acl => vec![
            feat("entry_count", Numeric, Num, &["rules"]),
            feat("permit_fraction", Numeric, Num, &["rules"]),
            feat("distinct_prefix_count", SetCardinality, Num, &["rules"]),
            feat("wildcard_use", Numeric, Num, &["rules"]),
            feat("action_sequence_hash", Categorical, Order, &["rules"]),
            feat("referenced_object_count", SetCardinality, Ref, &["rules"]),
            feat("name_template_class", Categorical, Cat, &["name"]),
        ],
        PropertyKind::RouteFilter => vec![
            feat("entry_count", Numeric, Num, &["rules"]),
            feat("permit_fraction", Numeric, Num, &["rules"]),
            feat("distinct_prefix_count", SetCardinality, Num, &["prefixes"]),
            feat("max_prefix_length", Numeric, Num, &["rules"]),
            feat("length_range_use", Numeric, Num, &["rules"]),
            feat("action_sequence_hash", Categorical, Order, &["rules"]),
            feat("name_template_class", Categorical, Cat, &["name"]),
        ],
        PropertyKind::Vrf => vec![
            feat("import_target_count", SetCardinality, Num, &["import_targets"]),
            feat("export_target_count", SetCardinality, Num, &["export_targets"]),
            feat("policy_reference_count", SetCardinality, Ref, &["import_policies", "export_policies"]),
            feat("max_routes", Numeric, Num, &["max_routes"]),
            feat("rd_template", Categorical, Cat, &["rd"]),
            feat("policy_template", BagOfTokens, Ref, &["import_policies", "export_policies"]),
            feat("name_template_class", Categorical, Cat, &["name"]),
        ],
        PropertyKind::RoutingPolicy => vec![
            feat("clause_count", Numeric, Num, &["clauses"]),
            feat("match_count", Numeric, Num, &["clauses"]),
            feat("set_count", Numeric, Num, &["clauses"]),
            feat("local_preference", Numeric, Num, &["clauses"]),
            feat("med", Numeric, Num, &["clauses"]),
            feat("final_action", Categorical, Cat, &["clauses"]),
            feat("reference_template", BagOfTokens, Ref, &["clauses"]),
            feat("name_template_class", Categorical, Cat, &["name"]),
        ],
    };
    FeatureSchema { kind, name: format!("{kind}-v{SCHEMA_VERSION}"), version: SCHEMA_VERSION, features }
}

/// Replaces every run of ASCII digits with `#`: `ACL_MGMT_12` → `ACL_MGMT_#`.
pub fn name_template_class(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut in_digits = false;
    for c in name.chars() {
        if c.is_ascii_digit() {
            if !in_digits {
                out.push('#');
            }
            in_digits = true;
        } else {
            out.push(c);
            in_digits = false;
        }
    }
    out
}

pub type TokenId = u32;

/// Run-wide token interner. Ids are dense from 0 in first-seen order.
#[derive(Debug, Default)]
pub struct TokenTable {
    inner: Mutex<Interner>,
}

#[derive(Debug, Default, Clone)]
struct Interner {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl TokenTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&self, token: &str) -> TokenId {
        let mut inner = self.inner.lock().expect("token table poisoned");
        if let Some(&id) = inner.ids.get(token) {
            return id;
        }
        let id = TokenId::try_from(inner.tokens.len()).expect("more than 2^32 distinct tokens");
        inner.tokens.push(token.to_owned());
        inner.ids.insert(token.to_owned(), id);
        id
    }

    pub fn resolve(&self, id: TokenId) -> Option<String> {
        self.inner.lock().expect("token table poisoned").tokens.get(id as usize).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("token table poisoned").tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> Vec<String> {
        self.inner.lock().expect("token table poisoned").tokens.clone()
    }
}

impl Clone for TokenTable {
    fn clone(&self) -> Self {
        TokenTable { inner: Mutex::new(self.inner.lock().expect("token table poisoned").clone()) }
    }
}

pub fn intern_token(table: &TokenTable, token: &str) -> TokenId {
    table.intern(token)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub property_id: PropertyId,
    pub kind: PropertyKind,
    pub schema_version: u32,
    pub numeric: Vec<f64>,
    pub categorical: Vec<TokenId>,
    /// feature → attributes it was derived from
    pub provenance: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("property `{property}`: feature `{feature}` count exceeds 2^32")]
    EncodingOverflow { property: PropertyId, feature: &'static str },
}

enum Value {
    Num(f64),
    Tok(String),
}

fn count(n: usize, property: &Property, feature: &'static str) -> Result<Value, EncodeError> {
    if n as u64 > u64::from(u32::MAX) + 1 {
        return Err(EncodeError::EncodingOverflow { property: property.id.clone(), feature });
    }
    Ok(Value::Num(n as f64))
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Digest of the action sequence with repeated actions collapsed, so
/// `permit permit deny` and `permit deny deny` share a value.
fn action_sequence_hash(actions: impl Iterator<Item = Action>) -> String {
    let mut runs: Vec<&str> = Vec::new();
    for a in actions {
        if runs.last() != Some(&a.as_str()) {
            runs.push(a.as_str());
        }
    }
    if runs.is_empty() {
        return MISSING.to_owned();
    }
    let digest = Sha256::digest(runs.join(">").as_bytes());
    hex::encode(&digest[..4])
}

fn bag<'a>(tokens: impl Iterator<Item = String> + 'a) -> String {
    let set: BTreeSet<String> = tokens.collect();
    if set.is_empty() {
        EMPTY_BAG.to_owned()
    } else {
        set.into_iter().collect::<Vec<_>>().join(",")
    }
}

fn feature_value(p: &Property, f: &Feature) -> Result<Value, EncodeError> {
    let name = f.name;
    let v = match (p.kind, name) {
        (_, "name_template_class") => Value::Tok(name_template_class(&p.name)),

        (PropertyKind::Acl, "entry_count") => count(p.acl_rules().len(), p, name)?,
        (PropertyKind::Acl, "permit_fraction") => {
            let rules = p.acl_rules();
            Value::Num(fraction(rules.iter().filter(|r| r.action == Action::Permit).count(), rules.len()))
        }
        (PropertyKind::Acl, "distinct_prefix_count") => {
            let set: BTreeSet<_> = p
                .acl_rules()
                .iter()
                .flat_map(|r| [&r.src, &r.dst])
                .filter_map(|e| match e {
                    Endpoint::Net(n) => Some(*n),
                    _ => None,
                })
                .collect();
            count(set.len(), p, name)?
        }
        (PropertyKind::Acl, "wildcard_use") => {
            let n = p.acl_rules().iter().flat_map(|r| [&r.src, &r.dst]).filter(|e| e.is_any()).count();
            count(n, p, name)?
        }
        (PropertyKind::Acl, "action_sequence_hash") => {
            Value::Tok(action_sequence_hash(p.acl_rules().iter().map(|r| r.action)))
        }
        (PropertyKind::Acl, "referenced_object_count") => {
            let set: BTreeSet<&str> = p.references.iter().map(|r| r.name.as_str()).collect();
            count(set.len(), p, name)?
        }

        (PropertyKind::RouteFilter, "entry_count") => count(p.route_filter_rules().len(), p, name)?,
        (PropertyKind::RouteFilter, "permit_fraction") => {
            let rules = p.route_filter_rules();
            Value::Num(fraction(rules.iter().filter(|r| r.action == Action::Permit).count(), rules.len()))
        }
        (PropertyKind::RouteFilter, "distinct_prefix_count") => {
            let set: BTreeSet<_> = p.route_filter_rules().iter().map(|r| r.prefix).collect();
            count(set.len(), p, name)?
        }
        (PropertyKind::RouteFilter, "max_prefix_length") => {
            let max = p.route_filter_rules().iter().map(|r| r.length_range().1).max().unwrap_or(0);
            Value::Num(f64::from(max))
        }
        (PropertyKind::RouteFilter, "length_range_use") => {
            let n = p.route_filter_rules().iter().filter(|r| r.ge.is_some() || r.le.is_some()).count();
            count(n, p, name)?
        }
        (PropertyKind::RouteFilter, "action_sequence_hash") => {
            Value::Tok(action_sequence_hash(p.route_filter_rules().iter().map(|r| r.action)))
        }

        (PropertyKind::Vrf, "import_target_count") => count(p.token_set("import_targets").map_or(0, |s| s.len()), p, name)?,
        (PropertyKind::Vrf, "export_target_count") => count(p.token_set("export_targets").map_or(0, |s| s.len()), p, name)?,
        (PropertyKind::Vrf, "policy_reference_count") => {
            let n = p.token_set("import_policies").map_or(0, |s| s.len())
                + p.token_set("export_policies").map_or(0, |s| s.len());
            count(n, p, name)?
        }
        // absent limit means unlimited, encoded as 0
        (PropertyKind::Vrf, "max_routes") => Value::Num(p.number("max_routes").unwrap_or(0.0)),
        (PropertyKind::Vrf, "rd_template") => Value::Tok(match p.token("rd") {
            Some(rd) => match rd.split_once(':') {
                Some((asn, _)) => format!("{asn}:#"),
                None => MISSING.to_owned(),
            },
            None => MISSING.to_owned(),
        }),
        (PropertyKind::Vrf, "policy_template") => {
            let imports = p.token_set("import_policies").into_iter().flatten().map(|n| format!("import:{}", name_template_class(n)));
            let exports = p.token_set("export_policies").into_iter().flatten().map(|n| format!("export:{}", name_template_class(n)));
            Value::Tok(bag(imports.chain(exports)))
        }

        (PropertyKind::RoutingPolicy, "clause_count") => count(p.clauses().len(), p, name)?,
        (PropertyKind::RoutingPolicy, "match_count") => count(p.clauses().iter().filter(|c| c.is_match()).count(), p, name)?,
        (PropertyKind::RoutingPolicy, "set_count") => count(p.clauses().iter().filter(|c| c.is_set()).count(), p, name)?,
        (PropertyKind::RoutingPolicy, "local_preference") => Value::Num(
            p.clauses()
                .iter()
                .rev()
                .find_map(|c| match c {
                    PolicyClause::SetLocalPreference(v) => Some(f64::from(*v)),
                    _ => None,
                })
                .unwrap_or(0.0),
        ),
        (PropertyKind::RoutingPolicy, "med") => Value::Num(
            p.clauses()
                .iter()
                .rev()
                .find_map(|c| match c {
                    PolicyClause::SetMed(v) => Some(f64::from(*v)),
                    _ => None,
                })
                .unwrap_or(0.0),
        ),
        (PropertyKind::RoutingPolicy, "final_action") => Value::Tok(
            p.clauses()
                .iter()
                .rev()
                .find_map(|c| match c {
                    PolicyClause::Action(a) => Some(a.to_string()),
                    _ => None,
                })
                .unwrap_or_else(|| MISSING.to_owned()),
        ),
        (PropertyKind::RoutingPolicy, "reference_template") => Value::Tok(bag(p.clauses().iter().filter_map(|c| match c {
            PolicyClause::MatchAcl(n) => Some(format!("acl:{}", name_template_class(n))),
            PolicyClause::MatchRouteFilter(n) => Some(format!("route-filter:{}", name_template_class(n))),
            _ => None,
        }))),
        (kind, other) => unreachable!("feature `{other}` is not in the {kind} schema"),
    };
    Ok(v)
}

/// Encodes one property under its kind's schema.
pub fn encode(property: &Property, table: &TokenTable) -> Result<FeatureVector, EncodeError> {
    let schema = feature_schema(property.kind);
    let mut numeric = Vec::with_capacity(schema.numeric_len());
    let mut categorical = Vec::with_capacity(schema.categorical_len());
    let mut provenance = BTreeMap::new();
    for f in &schema.features {
        match (feature_value(property, f)?, f.ftype.is_numeric()) {
            (Value::Num(x), true) => {
                debug_assert!(x.is_finite());
                numeric.push(x);
            }
            (Value::Tok(t), false) => categorical.push(table.intern(&t)),
            _ => unreachable!("feature `{}` produced a value of the wrong type", f.name),
        }
        provenance.insert(f.name.to_owned(), f.sources.iter().map(|s| (*s).to_owned()).collect());
    }
    Ok(FeatureVector {
        property_id: property.id.clone(),
        kind: property.kind,
        schema_version: SCHEMA_VERSION,
        numeric,
        categorical,
        provenance,
    })
}

/// All vectors of a run plus the token table they were interned into.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub schema_version: u32,
    pub vectors: Vec<FeatureVector>,
    pub tokens: TokenTable,
    by_id: HashMap<PropertyId, usize>,
}

impl EncodedCorpus {
    pub fn new(vectors: Vec<FeatureVector>, tokens: TokenTable) -> Self {
        let by_id = vectors.iter().enumerate().map(|(i, v)| (v.property_id.clone(), i)).collect();
        EncodedCorpus { schema_version: SCHEMA_VERSION, vectors, tokens, by_id }
    }

    pub fn get(&self, id: &PropertyId) -> Option<&FeatureVector> {
        self.by_id.get(id).map(|&i| &self.vectors[i])
    }

    pub fn token(&self, id: TokenId) -> String {
        self.tokens.resolve(id).unwrap_or_else(|| MISSING.to_owned())
    }

    /// Categorical values of `v` as strings.
    pub fn categorical_values(&self, v: &FeatureVector) -> Vec<String> {
        v.categorical.iter().map(|&t| self.token(t)).collect()
    }

    pub fn of_kind(&self, kind: PropertyKind) -> impl Iterator<Item = &FeatureVector> {
        self.vectors.iter().filter(move |v| v.kind == kind)
    }
}

/// Encodes properties in order, interning into a fresh table.
pub fn encode_all(properties: &[Property]) -> Result<EncodedCorpus, EncodeError> {
    let table = TokenTable::new();
    let vectors = properties.iter().map(|p| encode(p, &table)).collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedCorpus::new(vectors, table))
}
