//! Everything derived from one snapshot that detectors need.

use std::collections::HashMap;

use crate::encoder::{encode_all, EncodeError, EncodedCorpus};
use crate::graph::{build_reference_graph, ReferenceGraph};
use crate::ingest::NetworkSnapshot;
use crate::properties::{extract_properties, Property, PropertyId};

#[derive(Debug, Clone)]
pub struct AnalysisBundle {
    pub snapshot: NetworkSnapshot,
    pub properties: Vec<Property>,
    pub graph: ReferenceGraph,
    pub corpus: EncodedCorpus,
    by_id: HashMap<PropertyId, usize>,
}

impl AnalysisBundle {
    pub fn build(snapshot: NetworkSnapshot) -> Result<Self, EncodeError> {
        let properties = extract_properties(&snapshot);
        let graph = build_reference_graph(&snapshot, &properties);
        let corpus = encode_all(&properties)?;
        let by_id = properties.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        Ok(AnalysisBundle { snapshot, properties, graph, corpus, by_id })
    }

    pub fn property(&self, id: &PropertyId) -> Option<&Property> {
        self.by_id.get(id).map(|&i| &self.properties[i])
    }
}
