//! Signature mining: per-kind cluster prototypes with per-feature statistics.
//!
//! Properties of one kind are first grouped exactly on their name template
//! class. Inside a group, clusters start from distinct vectors and are merged
//! agglomeratively, closest prototypes first, while the prototype distance
//! stays below `merge_distance`. Clusters smaller than `min_cluster_size`
//! go to the unclustered bucket.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{feature_schema, DeviationCategory, EncodedCorpus, FeatureSchema, FeatureVector, SCHEMA_VERSION};
use crate::properties::{PropertyId, PropertyKind};
use crate::stats;

/// Floor for MAD in numeric deviations.
pub const MAD_EPSILON: f64 = 1e-9;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignatureId(pub u32);

impl fmt::Display for SignatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningParams {
    pub min_cluster_size: usize,
    pub merge_distance: f64,
    pub numeric_weight: f64,
    pub categorical_weight: f64,
    /// A categorical value is common when held by at least this fraction of members.
    pub common_fraction: f64,
    pub default_threshold: f64,
    /// Deviation assigned to an uncommon categorical value during detection.
    pub categorical_mismatch: f64,
    pub seed: u64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            min_cluster_size: 3,
            merge_distance: 0.5,
            numeric_weight: 1.0,
            categorical_weight: 1.0,
            common_fraction: 0.1,
            default_threshold: 3.5,
            categorical_mismatch: 10.0,
            seed: 0,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<(), SignatureError> {
        let bad = |what: &str| Err(SignatureError::InvalidParams(what.to_owned()));
        if self.min_cluster_size == 0 {
            return bad("min_cluster_size must be at least 1");
        }
        if !(self.merge_distance.is_finite() && self.merge_distance >= 0.0) {
            return bad("merge_distance must be finite and non-negative");
        }
        if !(self.numeric_weight >= 0.0 && self.categorical_weight >= 0.0)
            || !(self.numeric_weight + self.categorical_weight > 0.0)
            || !self.numeric_weight.is_finite()
            || !self.categorical_weight.is_finite()
        {
            return bad("distance weights must be finite, non-negative and not both zero");
        }
        if !(0.0..=1.0).contains(&self.common_fraction) {
            return bad("common_fraction must lie in [0, 1]");
        }
        if !(self.default_threshold.is_finite() && self.default_threshold > 0.0) {
            return bad("default_threshold must be positive");
        }
        if !(self.categorical_mismatch.is_finite() && self.categorical_mismatch >= 0.0) {
            return bad("categorical_mismatch must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SignatureError {
    #[error("kind {0} has no mined signatures")]
    KindNotMined(PropertyKind),
    #[error("invalid mining parameters: {0}")]
    InvalidParams(String),
    #[error("vector for `{0}` does not match its kind's schema")]
    SchemaMismatch(PropertyId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStat {
    pub feature: String,
    pub median: f64,
    pub mad: f64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalStat {
    pub feature: String,
    pub frequencies: BTreeMap<String, usize>,
}

impl CategoricalStat {
    pub fn frequency(&self, value: &str) -> usize {
        self.frequencies.get(value).copied().unwrap_or(0)
    }

    /// Most frequent value, lexicographically first on ties.
    pub fn mode(&self) -> Option<&str> {
        let mut best: Option<(&str, usize)> = None;
        for (v, &n) in &self.frequencies {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((v, n));
            }
        }
        best.map(|(v, _)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub id: SignatureId,
    pub kind: PropertyKind,
    pub template_class: String,
    pub member_count: usize,
    pub numeric_stats: Vec<NumericStat>,
    pub categorical_stats: Vec<CategoricalStat>,
    pub threshold: f64,
    /// feature → exempted values
    pub whitelist: BTreeMap<String, BTreeSet<String>>,
    pub suppressed: BTreeSet<PropertyId>,
}

impl Signature {
    pub fn is_whitelisted(&self, feature: &str, value: &str) -> bool {
        self.whitelist.get(feature).is_some_and(|s| s.contains(value))
    }

    pub fn whitelist_size(&self) -> usize {
        self.whitelist.values().map(BTreeSet::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSet {
    pub format_version: u32,
    pub schema_version: u32,
    pub generation: u64,
    pub params: MiningParams,
    pub signatures: Vec<Signature>,
    /// property → signature; `None` is the unclustered bucket
    pub assignment: BTreeMap<PropertyId, Option<SignatureId>>,
    pub warnings: Vec<String>,
}

impl SignatureSet {
    pub fn get(&self, id: SignatureId) -> Option<&Signature> {
        self.signatures.iter().find(|s| s.id == id)
    }

    pub fn get_mut(&mut self, id: SignatureId) -> Option<&mut Signature> {
        self.signatures.iter_mut().find(|s| s.id == id)
    }

    pub fn signature_of(&self, property: &PropertyId) -> Option<SignatureId> {
        self.assignment.get(property).copied().flatten()
    }

    /// Members of `id`, in property-id order.
    pub fn members(&self, id: SignatureId) -> Vec<&PropertyId> {
        self.assignment.iter().filter(|(_, s)| **s == Some(id)).map(|(p, _)| p).collect()
    }

    pub fn unclustered(&self) -> Vec<&PropertyId> {
        self.assignment.iter().filter(|(_, s)| s.is_none()).map(|(p, _)| p).collect()
    }

    pub fn mined_kinds(&self) -> BTreeSet<PropertyKind> {
        self.signatures.iter().map(|s| s.kind).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("signature sets always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Statistics of a member population, shared by mining and retune merges.
pub fn compute_stats(schema: &FeatureSchema, members: &[&FeatureVector], corpus: &EncodedCorpus) -> (Vec<NumericStat>, Vec<CategoricalStat>) {
    let numeric = schema
        .numeric_features()
        .enumerate()
        .map(|(i, f)| {
            let col: Vec<f64> = members.iter().map(|v| v.numeric[i]).collect();
            NumericStat {
                feature: f.name.to_owned(),
                median: stats::median(&col).unwrap_or(0.0),
                mad: stats::mad(&col).unwrap_or(0.0),
                mean: stats::mean(&col).unwrap_or(0.0),
                stddev: stats::stddev(&col).unwrap_or(0.0),
            }
        })
        .collect();
    let categorical = schema
        .categorical_features()
        .enumerate()
        .map(|(i, f)| {
            let mut frequencies = BTreeMap::new();
            for v in members {
                *frequencies.entry(corpus.token(v.categorical[i])).or_insert(0) += 1;
            }
            CategoricalStat { feature: f.name.to_owned(), frequencies }
        })
        .collect();
    (numeric, categorical)
}

/// Median/mode prototype used while merging.
#[derive(Debug, Clone)]
struct Prototype {
    numeric: Vec<f64>,
    categorical: Vec<u32>,
}

impl Prototype {
    fn of(members: &[&FeatureVector]) -> Self {
        let n_num = members[0].numeric.len();
        let n_cat = members[0].categorical.len();
        let numeric = (0..n_num)
            .map(|i| stats::median(&members.iter().map(|v| v.numeric[i]).collect::<Vec<_>>()).unwrap_or(0.0))
            .collect();
        let categorical = (0..n_cat)
            .map(|i| {
                let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
                for v in members {
                    *counts.entry(v.categorical[i]).or_insert(0) += 1;
                }
                // highest count, lowest token id on ties
                counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(t, _)| t).unwrap_or(0)
            })
            .collect();
        Prototype { numeric, categorical }
    }

    /// Weighted mean of bounded per-feature differences, in `[0, 1]`.
    fn distance(&self, other: &Prototype, params: &MiningParams) -> f64 {
        let num: f64 = self
            .numeric
            .iter()
            .zip(&other.numeric)
            .map(|(a, b)| ((a - b).abs() / a.abs().max(b.abs()).max(1.0)).min(1.0))
            .sum();
        let cat = self.categorical.iter().zip(&other.categorical).filter(|(a, b)| a != b).count() as f64;
        let wn = params.numeric_weight;
        let wc = params.categorical_weight;
        let denom = wn * self.numeric.len() as f64 + wc * self.categorical.len() as f64;
        if denom == 0.0 {
            0.0
        } else {
            (wn * num + wc * cat) / denom
        }
    }
}

/// Agglomerative clustering of one template group. Returns member index lists
/// (indices into `group`), each sorted, ordered by first member.
fn cluster_group(group: &[&FeatureVector], params: &MiningParams) -> Vec<Vec<usize>> {
    // identical vectors start in the same cluster
    let mut seeds: BTreeMap<(Vec<u64>, Vec<u32>), Vec<usize>> = BTreeMap::new();
    for (i, v) in group.iter().enumerate() {
        let key = (v.numeric.iter().map(|x| x.to_bits()).collect(), v.categorical.clone());
        seeds.entry(key).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = seeds.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    let proto = |c: &[usize]| Prototype::of(&c.iter().map(|&i| group[i]).collect::<Vec<_>>());
    let mut protos: Vec<Prototype> = clusters.iter().map(|c| proto(c)).collect();

    let n = clusters.len();
    let mut alive = vec![true; n];
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            dist[i][j] = protos[i].distance(&protos[j], params);
        }
    }
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && best.is_none_or(|(_, _, d)| dist[i][j] < d) {
                    best = Some((i, j, dist[i][j]));
                }
            }
        }
        let Some((i, j, d)) = best else { break };
        if d >= params.merge_distance {
            break;
        }
        let moved = std::mem::take(&mut clusters[j]);
        clusters[i].extend(moved);
        clusters[i].sort_unstable();
        alive[j] = false;
        protos[i] = proto(&clusters[i]);
        for k in 0..n {
            if alive[k] && k != i {
                let d = protos[i].distance(&protos[k], params);
                if k < i {
                    dist[k][i] = d;
                } else {
                    dist[i][k] = d;
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = clusters.into_iter().zip(alive).filter(|(_, a)| *a).map(|(c, _)| c).collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Mines signatures for every kind with at least `min_cluster_size` vectors.
pub fn mine_signatures(corpus: &EncodedCorpus, params: &MiningParams) -> Result<SignatureSet, SignatureError> {
    params.validate()?;
    let mut signatures = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut next_id = 0u32;

    for kind in PropertyKind::ALL {
        let schema = feature_schema(kind);
        let vectors: Vec<&FeatureVector> = corpus.of_kind(kind).collect();
        for v in &vectors {
            if v.numeric.len() != schema.numeric_len() || v.categorical.len() != schema.categorical_len() {
                return Err(SignatureError::SchemaMismatch(v.property_id.clone()));
            }
            assignment.insert(v.property_id.clone(), None);
        }
        if vectors.is_empty() {
            continue;
        }
        if vectors.len() < params.min_cluster_size {
            warnings.push(format!(
                "too few {kind} properties ({} < {}); kind skipped",
                vectors.len(),
                params.min_cluster_size
            ));
            continue;
        }
        let name_slot = schema
            .categorical_features()
            .position(|f| f.name == "name_template_class")
            .expect("every schema has a name template class");
        let mut groups: BTreeMap<String, Vec<&FeatureVector>> = BTreeMap::new();
        for v in &vectors {
            groups.entry(corpus.token(v.categorical[name_slot])).or_default().push(v);
        }
        for (template, group) in groups {
            for cluster in cluster_group(&group, params) {
                let members: Vec<&FeatureVector> = cluster.iter().map(|&i| group[i]).collect();
                if members.len() < params.min_cluster_size {
                    continue;
                }
                let id = SignatureId(next_id);
                next_id += 1;
                let (numeric_stats, categorical_stats) = compute_stats(&schema, &members, corpus);
                for m in &members {
                    assignment.insert(m.property_id.clone(), Some(id));
                }
                signatures.push(Signature {
                    id,
                    kind,
                    template_class: template.clone(),
                    member_count: members.len(),
                    numeric_stats,
                    categorical_stats,
                    threshold: params.default_threshold,
                    whitelist: BTreeMap::new(),
                    suppressed: BTreeSet::new(),
                });
            }
        }
    }
    Ok(SignatureSet {
        format_version: FORMAT_VERSION,
        schema_version: SCHEMA_VERSION,
        generation: 0,
        params: params.clone(),
        signatures,
        assignment,
        warnings,
    })
}

/// Per-feature deviation of a vector from a signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDeviation {
    pub feature: String,
    pub category: DeviationCategory,
    pub numeric: bool,
    pub observed: String,
    pub expected: String,
    /// Distance contribution used by `assign` (0/1 for categoricals).
    pub distance: f64,
    /// Deviation compared against the signature threshold.
    pub deviation: f64,
    pub whitelisted: bool,
}

/// Renders a numeric value the way whitelists store it.
pub fn format_value(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn numeric_deviation(x: f64, stat: &NumericStat) -> f64 {
    (x - stat.median).abs() / stat.mad.max(MAD_EPSILON)
}

fn is_common(stat: &CategoricalStat, value: &str, member_count: usize, params: &MiningParams) -> bool {
    stat.frequency(value) as f64 >= params.common_fraction * member_count as f64
}

/// Every feature's deviation from `sig`, in schema order.
pub fn deviations(v: &FeatureVector, sig: &Signature, corpus: &EncodedCorpus, params: &MiningParams) -> Vec<FeatureDeviation> {
    let schema = feature_schema(sig.kind);
    let mut out = Vec::with_capacity(schema.features.len());
    let (mut ni, mut ci) = (0, 0);
    for f in &schema.features {
        if f.ftype.is_numeric() {
            let stat = &sig.numeric_stats[ni];
            let x = v.numeric[ni];
            ni += 1;
            let d = numeric_deviation(x, stat);
            let observed = format_value(x);
            out.push(FeatureDeviation {
                feature: f.name.to_owned(),
                category: f.category,
                numeric: true,
                whitelisted: sig.is_whitelisted(f.name, &observed),
                observed,
                expected: format!("median {} (MAD {})", format_value(stat.median), format_value(stat.mad)),
                distance: d,
                deviation: d,
            });
        } else {
            let stat = &sig.categorical_stats[ci];
            let value = corpus.token(v.categorical[ci]);
            ci += 1;
            let common = is_common(stat, &value, sig.member_count, params);
            let expected = match stat.mode() {
                Some(m) => format!("{m} ({}/{})", stat.frequency(m), sig.member_count),
                None => "-".to_owned(),
            };
            out.push(FeatureDeviation {
                feature: f.name.to_owned(),
                category: f.category,
                numeric: false,
                whitelisted: sig.is_whitelisted(f.name, &value),
                observed: value,
                expected,
                distance: if common { 0.0 } else { 1.0 },
                deviation: if common { 0.0 } else { params.categorical_mismatch },
            });
        }
    }
    out
}

/// Mixed distance of `v` to `sig`: weighted mean of per-feature distances.
pub fn distance(v: &FeatureVector, sig: &Signature, corpus: &EncodedCorpus, params: &MiningParams) -> f64 {
    let devs = deviations(v, sig, corpus, params);
    let (mut num, mut cat, mut n_num, mut n_cat) = (0.0, 0.0, 0usize, 0usize);
    for d in &devs {
        if d.numeric {
            num += d.distance;
            n_num += 1;
        } else {
            cat += d.distance;
            n_cat += 1;
        }
    }
    let wn = params.numeric_weight;
    let wc = params.categorical_weight;
    let denom = wn * n_num as f64 + wc * n_cat as f64;
    if denom == 0.0 {
        0.0
    } else {
        (wn * num + wc * cat) / denom
    }
}

/// Nearest signature of the vector's kind. Ties go to the lowest id.
pub fn assign(v: &FeatureVector, set: &SignatureSet, corpus: &EncodedCorpus) -> Result<(SignatureId, f64), SignatureError> {
    set.signatures
        .iter()
        .filter(|s| s.kind == v.kind)
        .map(|s| (s.id, distance(v, s, corpus, &set.params)))
        .fold(None, |best: Option<(SignatureId, f64)>, (id, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((id, d)),
        })
        .ok_or(SignatureError::KindNotMined(v.kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureRow {
    pub id: SignatureId,
    pub kind: PropertyKind,
    pub template_class: String,
    pub member_count: usize,
    pub top_deviant_features: Vec<String>,
    pub threshold: f64,
    pub whitelist_size: usize,
    pub suppressed: usize,
}

/// Features with the most spread inside the signature, up to three.
fn top_deviant_features(sig: &Signature) -> Vec<String> {
    let mut spread: Vec<(f64, &str)> = Vec::new();
    for s in &sig.numeric_stats {
        spread.push((s.stddev / s.mean.abs().max(1.0), &s.feature));
    }
    for s in &sig.categorical_stats {
        let modal = s.mode().map_or(0, |m| s.frequency(m));
        spread.push((1.0 - modal as f64 / sig.member_count.max(1) as f64, &s.feature));
    }
    spread.retain(|(v, _)| *v > 0.0);
    spread.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    spread.into_iter().take(3).map(|(_, f)| f.to_owned()).collect()
}

/// One summary row per signature, largest first.
pub fn signature_report(set: &SignatureSet) -> Vec<SignatureRow> {
    let mut rows: Vec<SignatureRow> = set
        .signatures
        .iter()
        .map(|s| SignatureRow {
            id: s.id,
            kind: s.kind,
            template_class: s.template_class.clone(),
            member_count: s.member_count,
            top_deviant_features: top_deviant_features(s),
            threshold: s.threshold,
            whitelist_size: s.whitelist_size(),
            suppressed: s.suppressed.len(),
        })
        .collect();
    rows.sort_by(|a, b| b.member_count.cmp(&a.member_count).then(a.id.cmp(&b.id)));
    rows
}
