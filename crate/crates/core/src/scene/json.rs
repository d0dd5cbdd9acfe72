//! Scene JSON.
//!
//! ```text
//! {
//!   "format_version": 1,            // standalone files only
//!   "vocab": {"predicates": [...], "attributes": [...]},
//!   "nodes": [{"id", "label", "attribute", "bbox": [x, y, w, h]}],
//!   "triples": [[subject_id, predicate, object_id]],
//!   "failure": {"desired_object", "causes": [...], "type"}   // optional
//! }
//! ```
//!
//! Causes are `{"kind": "spatial", "triple": [s, p, o]}` or
//! `{"kind": "attribute", "node": id, "attribute": name}`. Scenes nested in a
//! corpus omit `format_version`; the corpus carries it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::*;
use crate::fileio;
use crate::FORMAT_VERSION;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SceneDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub vocab: VocabDoc,
    pub nodes: Vec<NodeDoc>,
    pub triples: Vec<(NodeId, String, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct VocabDoc {
    pub predicates: Vec<String>,
    pub attributes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct NodeDoc {
    pub id: NodeId,
    pub label: String,
    pub attribute: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FailureDoc {
    pub desired_object: NodeId,
    pub causes: Vec<CauseDoc>,
    #[serde(rename = "type")]
    pub failure_type: FailureType,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub(crate) enum CauseDoc {
    Spatial { triple: (NodeId, String, NodeId) },
    Attribute { node: NodeId, attribute: String },
}

/// A scene graph with an optional recorded failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub graph: SceneGraph,
    pub failure: Option<FailureScenario>,
}

impl Scene {
    pub fn from_graph(graph: SceneGraph) -> Self {
        Scene { graph, failure: None }
    }

    pub fn from_scenario(scenario: FailureScenario) -> Self {
        Scene {
            graph: scenario.graph.clone(),
            failure: Some(scenario),
        }
    }

    pub fn into_scenario(self) -> Result<FailureScenario> {
        self.failure
            .ok_or_else(|| Error::InvalidScene("scene has no recorded failure".into()))
    }
}

impl From<&FailureCause> for CauseDoc {
    fn from(c: &FailureCause) -> Self {
        match c {
            FailureCause::Spatial(t) => CauseDoc::Spatial {
                triple: (t.subject, t.predicate.clone(), t.object),
            },
            FailureCause::Attribute { node, attribute } => CauseDoc::Attribute {
                node: *node,
                attribute: attribute.clone(),
            },
        }
    }
}

impl From<CauseDoc> for FailureCause {
    fn from(c: CauseDoc) -> Self {
        match c {
            CauseDoc::Spatial { triple: (s, p, o) } => FailureCause::Spatial(RelationTriple::new(s, p, o)),
            CauseDoc::Attribute { node, attribute } => FailureCause::Attribute { node, attribute },
        }
    }
}

impl SceneDoc {
    pub(crate) fn from_parts(graph: &SceneGraph, failure: Option<&FailureScenario>, version: Option<u32>) -> Self {
        SceneDoc {
            format_version: version,
            vocab: VocabDoc {
                predicates: graph.predicates.names().to_vec(),
                attributes: graph.attributes.names().to_vec(),
            },
            nodes: graph
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    label: n.label.clone(),
                    attribute: n.attribute.clone(),
                    bbox: [n.bbox.x, n.bbox.y, n.bbox.w, n.bbox.h],
                })
                .collect(),
            triples: graph
                .triples
                .iter()
                .map(|t| (t.subject, t.predicate.clone(), t.object))
                .collect(),
            failure: failure.map(|f| FailureDoc {
                desired_object: f.desired_object,
                causes: f.causes.iter().map(CauseDoc::from).collect(),
                failure_type: f.failure_type,
            }),
        }
    }

    /// Builds the in-memory scene, rejecting any invariant violation.
    pub(crate) fn into_scene(self) -> Result<Scene> {
        let predicates = PredicateVocabulary::new(self.vocab.predicates)?;
        let attributes = AttributeVocabulary::new(self.vocab.attributes)?;
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                let [x, y, w, h] = n.bbox;
                Ok(SceneNode {
                    id: n.id,
                    bbox: BoundingBox2D::new(x, y, w, h)
                        .map_err(|e| Error::InvalidScene(format!("node {}: {e}", n.id)))?,
                    label: n.label,
                    attribute: n.attribute,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let triples = self
            .triples
            .into_iter()
            .map(|(s, p, o)| RelationTriple::new(s, p, o))
            .collect();
        let graph = SceneGraph::new(predicates, attributes, nodes, triples).validated()?;
        let failure = match self.failure {
            None => None,
            Some(f) => {
                let causes = f.causes.into_iter().map(FailureCause::from).collect();
                let scenario = FailureScenario::new(graph.clone(), f.desired_object, causes)?;
                if scenario.failure_type != f.failure_type {
                    return Err(Error::InvalidScene(format!(
                        "recorded failure type {} but causes imply {}",
                        f.failure_type, scenario.failure_type
                    )));
                }
                Some(scenario)
            }
        };
        Ok(Scene { graph, failure })
    }
}

/// Serializes a standalone scene file (with `format_version`).
pub fn scene_to_json(scene: &Scene) -> Result<String> {
    let doc = SceneDoc::from_parts(&scene.graph, scene.failure.as_ref(), Some(FORMAT_VERSION));
    fileio::to_json(&doc)
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let doc: SceneDoc = fileio::from_versioned_json(text)?;
    doc.into_scene()
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    fileio::write_string(path, &scene_to_json(scene)?)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene(&fileio::read_string(path)?)
}
