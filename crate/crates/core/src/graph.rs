//! Cross-reference graph over config objects.
//!
//! Names resolve on the referencing device first. Route filters and routing
//! policies then fall back to the rest of the snapshot, in device-name order.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{NetworkSnapshot, StanzaKind};
use crate::properties::{stanza_references, ObjectId, Property};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RefSite {
    pub file: PathBuf,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: ObjectId,
    pub to: ObjectId,
    pub site: RefSite,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dangling {
    pub from: ObjectId,
    pub target: StanzaKind,
    pub missing_name: String,
    pub site: RefSite,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown property `{0}`")]
    UnknownProperty(ObjectId),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReferenceGraph {
    pub nodes: Vec<ObjectId>,
    pub edges: Vec<Edge>,
    pub dangling: Vec<Dangling>,
    #[serde(skip)]
    index: HashMap<ObjectId, usize>,
    /// node → nodes that use it
    #[serde(skip)]
    users: Vec<Vec<usize>>,
}

impl ReferenceGraph {
    pub fn contains(&self, id: &ObjectId) -> bool {
        self.index.contains_key(id)
    }

    pub fn dangling_from<'a>(&'a self, id: &'a ObjectId) -> impl Iterator<Item = &'a Dangling> {
        self.dangling.iter().filter(move |d| &d.from == id)
    }

    pub fn has_dangling(&self, id: &ObjectId) -> bool {
        self.dangling_from(id).next().is_some()
    }

    /// Objects that directly use `id`.
    pub fn users_of(&self, id: &ObjectId) -> Vec<&ObjectId> {
        self.index
            .get(id)
            .map(|&i| self.users[i].iter().map(|&u| &self.nodes[u]).collect())
            .unwrap_or_default()
    }

    /// Number of distinct transitive dependents of `id`, excluding itself.
    pub fn blast_radius(&self, id: &ObjectId) -> Result<usize, GraphError> {
        let &start = self.index.get(id).ok_or_else(|| GraphError::UnknownProperty(id.clone()))?;
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 0;
        while let Some(n) = queue.pop_front() {
            for &u in &self.users[n] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        Ok(count)
    }

    /// Builds a graph from explicit nodes and edges; used by tests and tooling.
    pub fn from_parts(nodes: Vec<ObjectId>, edges: Vec<Edge>, dangling: Vec<Dangling>) -> Self {
        let mut g = ReferenceGraph { nodes, edges, dangling, ..Default::default() };
        g.reindex();
        g
    }

    fn reindex(&mut self) {
        self.index = self.nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        self.users = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if let (Some(&from), Some(&to)) = (self.index.get(&e.from), self.index.get(&e.to)) {
                if !self.users[to].contains(&from) {
                    self.users[to].push(from);
                }
            }
        }
    }
}

/// Builds the graph over every stanza of the snapshot. `properties` must
/// come from the same snapshot; their ids are a subset of the nodes.
pub fn build_reference_graph(snapshot: &NetworkSnapshot, properties: &[Property]) -> ReferenceGraph {
    // (kind, name) → devices defining it, in device order
    let mut defs: BTreeMap<(StanzaKind, &str), Vec<&str>> = BTreeMap::new();
    let mut nodes = Vec::new();
    for dev in snapshot.devices.values() {
        for s in &dev.stanzas {
            defs.entry((s.kind, s.name.as_str())).or_default().push(dev.device_name.as_str());
            nodes.push(ObjectId::new(&dev.device_name, s.kind, &s.name));
        }
    }
    debug_assert!(properties.iter().all(|p| nodes.contains(&p.id)));

    let mut edges = Vec::new();
    let mut dangling = Vec::new();
    for dev in snapshot.devices.values() {
        for s in &dev.stanzas {
            let from = ObjectId::new(&dev.device_name, s.kind, &s.name);
            for r in stanza_references(s) {
                let site = RefSite { file: dev.source_path.clone(), line: r.line };
                let holders = defs.get(&(r.target, r.name.as_str()));
                let local = holders.is_some_and(|h| h.contains(&dev.device_name.as_str()));
                let resolved = if local {
                    Some(dev.device_name.as_str())
                } else if matches!(r.target, StanzaKind::RouteFilter | StanzaKind::RoutingPolicy) {
                    holders.and_then(|h| h.first().copied())
                } else {
                    None
                };
                match resolved {
                    Some(d) => edges.push(Edge { from: from.clone(), to: ObjectId::new(d, r.target, &r.name), site }),
                    None => dangling.push(Dangling { from: from.clone(), target: r.target, missing_name: r.name, site }),
                }
            }
        }
    }
    ReferenceGraph::from_parts(nodes, edges, dangling)
}
