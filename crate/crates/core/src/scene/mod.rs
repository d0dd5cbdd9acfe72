//! Scene graphs of tabletop scenes and the pick-failure taxonomy.
//!
//! A [`SceneGraph`] holds nodes (bounding box, object label, one attribute)
//! and an ordered list of directed [`RelationTriple`]s. Triple order is
//! insertion order and is what every downstream renderer follows.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) mod json;

pub use json::{load_scene, parse_scene, save_scene, scene_to_json, Scene};

pub type NodeId = u32;

/// Attribute name meaning "no manipulation-relevant property".
pub const NO_ATTRIBUTE: &str = "none";

pub const DEFAULT_PREDICATES: [&str; 6] = ["on", "in", "underneath", "near", "close_to", "inside"];
pub const DEFAULT_ATTRIBUTES: [&str; 4] = [NO_ATTRIBUTE, "fragile", "heavy", "hot"];

/// Attributes that prevent a plain pick and therefore count as failure causes.
pub const ADVERSE_ATTRIBUTES: [&str; 3] = ["fragile", "heavy", "hot"];

pub fn is_adverse_attribute(name: &str) -> bool {
    ADVERSE_ATTRIBUTES.contains(&name)
}

/// Axis-aligned image box in pixels; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox2D { x, y, w, h };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.x, self.y, self.w, self.h];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinate in {self:?}")));
        }
        if self.x < 0.0 || self.y < 0.0 {
            return Err(Error::InvalidBox(format!("negative origin in {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!("zero-area box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox2D) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &BoundingBox2D) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// True when `other` lies entirely within `self` (edges may touch).
    pub fn contains(&self, other: &BoundingBox2D) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }
}

/// Ordered set of names; position defines the one-hot index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidScene("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidScene("vocabulary contains an empty name".into()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidScene(format!("duplicate vocabulary entry {name:?}")));
            }
        }
        Ok(Vocabulary { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

macro_rules! vocab_newtype {
    ($name:ident, $defaults:expr) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $name(Vocabulary);

        impl std::ops::Deref for $name {
            type Target = Vocabulary;
            fn deref(&self) -> &Vocabulary {
                &self.0
            }
        }

        impl Default for $name {
            fn default() -> Self {
                $name(Vocabulary::new($defaults).expect("default vocabulary is valid"))
            }
        }
    };
}

vocab_newtype!(PredicateVocabulary, DEFAULT_PREDICATES);
vocab_newtype!(AttributeVocabulary, DEFAULT_ATTRIBUTES);

impl PredicateVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Vocabulary::new(names).map(PredicateVocabulary)
    }
}

impl AttributeVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab = Vocabulary::new(names)?;
        if !vocab.contains(NO_ATTRIBUTE) {
            return Err(Error::InvalidScene(format!(
                "attribute vocabulary must contain {NO_ATTRIBUTE:?}"
            )));
        }
        Ok(AttributeVocabulary(vocab))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub id: NodeId,
    pub bbox: BoundingBox2D,
    pub label: String,
    pub attribute: String,
}

/// Directed relation `<subject, predicate, object>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject: NodeId,
    pub predicate: String,
    pub object: NodeId,
}

impl RelationTriple {
    pub fn new(subject: NodeId, predicate: impl Into<String>, object: NodeId) -> Self {
        RelationTriple {
            subject,
            predicate: predicate.into(),
            object,
        }
    }

    pub fn mentions(&self, id: NodeId) -> bool {
        self.subject == id || self.object == id
    }

    /// The endpoint that is not `id`, if `id` is an endpoint.
    pub fn other(&self, id: NodeId) -> Option<NodeId> {
        if self.subject == id {
            Some(self.object)
        } else if self.object == id {
            Some(self.subject)
        } else {
            None
        }
    }
}

impl fmt::Display for RelationTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub predicates: PredicateVocabulary,
    pub attributes: AttributeVocabulary,
    pub nodes: Vec<SceneNode>,
    pub triples: Vec<RelationTriple>,
}

impl SceneGraph {
    pub fn new(
        predicates: PredicateVocabulary,
        attributes: AttributeVocabulary,
        nodes: Vec<SceneNode>,
        triples: Vec<RelationTriple>,
    ) -> Self {
        SceneGraph {
            predicates,
            attributes,
            nodes,
            triples,
        }
    }

    pub fn empty() -> Self {
        SceneGraph::new(Default::default(), Default::default(), Vec::new(), Vec::new())
    }

    pub fn node(&self, id: NodeId) -> Option<&SceneNode> {
        match self.nodes.get(id as usize) {
            Some(n) if n.id == id => Some(n),
            _ => self.nodes.iter().find(|n| n.id == id),
        }
    }

    pub fn require_node(&self, id: NodeId) -> Result<&SceneNode> {
        self.node(id).ok_or(Error::UnknownNode(id))
    }

    pub fn contains_triple(&self, triple: &RelationTriple) -> bool {
        self.triples.iter().any(|t| t == triple)
    }

    /// Validates and returns `self`, or the first violation as an error.
    pub fn validated(self) -> Result<Self> {
        match validate_graph(&self).into_iter().next() {
            None => Ok(self),
            Some(v) => Err(Error::InvalidScene(v.to_string())),
        }
    }
}

/// One broken graph invariant, phrased for humans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks every [`SceneGraph`] invariant. An empty report means the graph is valid.
pub fn validate_graph(graph: &SceneGraph) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut ids = HashSet::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if !ids.insert(node.id) {
            report.push(Violation(format!("node {i}: duplicate id {}", node.id)));
        }
        if let Err(e) = node.bbox.check() {
            report.push(Violation(format!("node {}: {e}", node.id)));
        }
        if !graph.attributes.contains(&node.attribute) {
            report.push(Violation(format!(
                "node {}: unknown attribute {:?}",
                node.id, node.attribute
            )));
        }
    }
    let mut seen = HashSet::new();
    for (i, t) in graph.triples.iter().enumerate() {
        if !ids.contains(&t.subject) {
            report.push(Violation(format!("triple {i}: unknown subject_id {}", t.subject)));
        }
        if !ids.contains(&t.object) {
            report.push(Violation(format!("triple {i}: unknown object_id {}", t.object)));
        }
        if t.subject == t.object {
            report.push(Violation(format!("triple {i}: self relation on node {}", t.subject)));
        }
        if !graph.predicates.contains(&t.predicate) {
            report.push(Violation(format!("triple {i}: unknown predicate {:?}", t.predicate)));
        }
        if !seen.insert(t) {
            report.push(Violation(format!("triple {i}: duplicate triple {t}")));
        }
    }
    report
}

/// The subgraph of `node_id`: every triple that mentions it, in graph order.
pub fn triples_containing(graph: &SceneGraph, node_id: NodeId) -> Result<Vec<RelationTriple>> {
    graph.require_node(node_id)?;
    Ok(graph.triples.iter().filter(|t| t.mentions(node_id)).cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FailureCause {
    /// Grounded in a relation of the scene graph (occlusion, containment).
    Spatial(RelationTriple),
    /// Grounded in a property of a single node.
    Attribute { node: NodeId, attribute: String },
}

impl FailureCause {
    pub fn is_spatial(&self) -> bool {
        matches!(self, FailureCause::Spatial(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureType {
    SingleSpatial,
    CompoundSpatial,
    Attribute,
}

impl FailureType {
    pub const ALL: [FailureType; 3] = [
        FailureType::SingleSpatial,
        FailureType::CompoundSpatial,
        FailureType::Attribute,
    ];

    /// Any attribute cause makes the failure an attribute failure; otherwise
    /// the count of spatial causes decides. `None` for an empty cause set.
    pub fn classify(causes: &[FailureCause]) -> Option<FailureType> {
        if causes.is_empty() {
            None
        } else if causes.iter().any(|c| !c.is_spatial()) {
            Some(FailureType::Attribute)
        } else if causes.len() >= 2 {
            Some(FailureType::CompoundSpatial)
        } else {
            Some(FailureType::SingleSpatial)
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureType::SingleSpatial => "single_spatial",
            FailureType::CompoundSpatial => "compound_spatial",
            FailureType::Attribute => "attribute",
        }
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scene plus the object the robot failed to pick and why.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureScenario {
    pub graph: SceneGraph,
    pub desired_object: NodeId,
    pub causes: Vec<FailureCause>,
    pub failure_type: FailureType,
}

impl FailureScenario {
    pub fn new(graph: SceneGraph, desired_object: NodeId, causes: Vec<FailureCause>) -> Result<Self> {
        let failure_type = FailureType::classify(&causes)
            .ok_or_else(|| Error::InvalidScene("failure scenario needs at least one cause".into()))?;
        let scenario = FailureScenario {
            graph,
            desired_object,
            causes,
            failure_type,
        };
        scenario.check()?;
        Ok(scenario)
    }

    fn check(&self) -> Result<()> {
        self.graph.require_node(self.desired_object)?;
        let mut seen = HashSet::new();
        for cause in &self.causes {
            if !seen.insert(cause) {
                return Err(Error::InvalidScene(format!("duplicate failure cause {cause:?}")));
            }
            match cause {
                FailureCause::Spatial(t) => {
                    if !self.graph.contains_triple(t) {
                        return Err(Error::InvalidScene(format!("spatial cause {t} is not a graph triple")));
                    }
                }
                FailureCause::Attribute { node, attribute } => {
                    self.graph.require_node(*node)?;
                    if attribute == NO_ATTRIBUTE {
                        return Err(Error::InvalidScene(format!(
                            "attribute cause on node {node} uses {NO_ATTRIBUTE:?}"
                        )));
                    }
                }
            }
        }
        if FailureType::classify(&self.causes) != Some(self.failure_type) {
            return Err(Error::InvalidScene(format!(
                "failure type {} does not match its causes",
                self.failure_type
            )));
        }
        Ok(())
    }

    pub fn desired_node(&self) -> &SceneNode {
        self.graph.node(self.desired_object).expect("checked at construction")
    }

    pub fn subgraph(&self) -> Vec<RelationTriple> {
        triples_containing(&self.graph, self.desired_object).expect("checked at construction")
    }

    pub fn spatial_causes(&self) -> impl Iterator<Item = &RelationTriple> {
        self.causes.iter().filter_map(|c| match c {
            FailureCause::Spatial(t) => Some(t),
            _ => None,
        })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(id: NodeId, label: &str, attribute: &str) -> SceneNode {
        SceneNode {
            id,
            bbox: BoundingBox2D::new(10.0 * id as f64, 5.0, 20.0, 10.0).unwrap(),
            label: label.into(),
            attribute: attribute.into(),
        }
    }

    /// Card under a newspaper, next to a mug.
    pub fn card_scene() -> SceneGraph {
        SceneGraph::new(
            Default::default(),
            Default::default(),
            vec![
                node(0, "credit card", "none"),
                node(1, "newspaper", "none"),
                node(2, "mug", "none"),
            ],
            vec![
                RelationTriple::new(0, "underneath", 1),
                RelationTriple::new(0, "near", 2),
            ],
        )
    }
}
