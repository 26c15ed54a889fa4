//! Three-layer flow report: property kind → deviation category → problem type.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detectors::Finding;
use crate::signatures::SignatureSet;

/// Layer-2 label for findings without deviant features.
pub const NO_CATEGORY: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub name: String,
    /// 0 = property kind, 1 = deviation category, 2 = problem type
    pub layer: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: usize,
    pub target: usize,
    pub value: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Sankey {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

impl Sankey {
    /// Total weight entering (layer > 0) or leaving (layer 0) each layer.
    pub fn layer_totals(&self) -> [usize; 3] {
        let mut t = [0; 3];
        for l in &self.links {
            let (s, d) = (self.nodes[l.source].layer as usize, self.nodes[l.target].layer as usize);
            if s == 0 {
                t[0] += l.value;
            }
            t[d] += l.value;
        }
        t
    }
}

pub fn build_sankey(findings: &[Finding]) -> Sankey {
    let mut first: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut second: BTreeMap<(String, String), usize> = BTreeMap::new();
    for f in findings {
        let kind = f.kind.keyword().to_owned();
        let cat = f.primary_category().map_or(NO_CATEGORY, |c| c.as_str()).to_owned();
        *first.entry((kind, cat.clone())).or_insert(0) += 1;
        *second.entry((cat, f.problem_type.to_string())).or_insert(0) += 1;
    }
    let mut layers: [BTreeSet<&str>; 3] = Default::default();
    for (k, c) in first.keys() {
        layers[0].insert(k);
        layers[1].insert(c);
    }
    for (_, p) in second.keys() {
        layers[2].insert(p);
    }
    let mut nodes = Vec::new();
    let mut index: BTreeMap<(u8, &str), usize> = BTreeMap::new();
    for (layer, names) in layers.iter().enumerate() {
        for &n in names {
            index.insert((layer as u8, n), nodes.len());
            nodes.push(SankeyNode { name: n.to_owned(), layer: layer as u8 });
        }
    }
    let mut links = Vec::new();
    for ((a, b), v) in &first {
        links.push(SankeyLink { source: index[&(0, a.as_str())], target: index[&(1, b.as_str())], value: *v });
    }
    for ((a, b), v) in &second {
        links.push(SankeyLink { source: index[&(1, a.as_str())], target: index[&(2, b.as_str())], value: *v });
    }
    Sankey { nodes, links }
}

/// Mined signatures versus signatures with at least one finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterCounts {
    pub signatures: usize,
    pub violated: usize,
}

pub fn cluster_counts(set: &SignatureSet, findings: &[Finding]) -> ClusterCounts {
    let violated: BTreeSet<_> = findings.iter().filter_map(|f| f.violated_signature).collect();
    ClusterCounts { signatures: set.signatures.len(), violated: violated.len() }
}
