//! JSON graph documents.

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeLength, GraphError, MetricGraph, Vertex, VertexCondition};
use crate::operator::ControlSpec;

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDoc {
    pub id: String,
    pub condition: VertexCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: EdgeLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disjoint: bool,
    pub vertices: Vec<VertexDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
}

impl GraphDocument {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn from_graph(g: &MetricGraph, control: Option<ControlSpec>) -> Self {
        let vertices = g.vertices().iter().map(|v| VertexDoc { id: v.id.clone(), condition: v.condition }).collect();
        let edges = g
            .edges()
            .iter()
            .map(|e| EdgeDoc {
                id: e.id.clone(),
                from: g.vertices()[e.from].id.clone(),
                to: g.vertices()[e.to].id.clone(),
                length: e.length.clone(),
            })
            .collect();
        Self { version: DOCUMENT_VERSION, disjoint: g.is_disjoint_family(), vertices, edges, control }
    }
}

/// Validate a document into a graph.
pub fn build_graph(doc: &GraphDocument) -> Result<MetricGraph, GraphError> {
    if doc.version != DOCUMENT_VERSION {
        return Err(GraphError::UnsupportedVersion(doc.version));
    }
    let vertices = doc.vertices.iter().map(|v| Vertex { id: v.id.clone(), condition: v.condition }).collect();
    let edges = doc
        .edges
        .iter()
        .map(|e| (e.id.clone(), e.from.clone(), e.to.clone(), e.length.clone()))
        .collect();
    MetricGraph::new(vertices, edges, doc.disjoint)
}
