//! Failure explanations in four variants: none, a cause-category baseline
//! (CB), the full semantic subgraph (SSG), and its top-ranked part (SSG-R).
//!
//! Explanations follow one template:
//!
//! ```text
//! The robot could not pick up the <label> because <phrase>, <phrase> and <phrase>.
//! ```
//!
//! With no phrases the sentence stops after the label.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{self, PairOrder, PairVoter, RankItem};
use crate::scene::{triples_containing, FailureScenario, NodeId, RelationTriple, SceneGraph, SceneNode, NO_ATTRIBUTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    None,
    Cb,
    Ssg,
    SsgR,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::None, Variant::Cb, Variant::Ssg, Variant::SsgR];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Cb => "cb",
            Variant::Ssg => "ssg",
            Variant::SsgR => "ssg_r",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `ssg-r` as well as `ssg_r`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Variant::None),
            "cb" => Ok(Variant::Cb),
            "ssg" => Ok(Variant::Ssg),
            "ssg_r" | "ssg-r" => Ok(Variant::SsgR),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected none, cb, ssg or ssg-r)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub variant: Variant,
    pub text: String,
    pub supporting_relations: Vec<RelationTriple>,
    /// The desired object's attribute when the explanation states it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_attribute: Option<String>,
}

/// Surface forms: `<subject> <predicate form> <object>` and `<subject> <attribute form>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhraseLexicon {
    pub article: String,
    pub predicates: BTreeMap<String, String>,
    pub attributes: BTreeMap<String, String>,
}

impl Default for PhraseLexicon {
    fn default() -> Self {
        let map = |pairs: &[(&str, &str)]| pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        PhraseLexicon {
            article: "the".into(),
            predicates: map(&[
                ("on", "is on"),
                ("in", "is in"),
                ("underneath", "is underneath"),
                ("near", "is near"),
                ("close_to", "is close to"),
                ("inside", "is inside"),
            ]),
            attributes: map(&[
                ("none", "has no special property"),
                ("fragile", "is fragile"),
                ("heavy", "is heavy"),
                ("hot", "is hot"),
            ]),
        }
    }
}

impl PhraseLexicon {
    /// Fails unless every predicate and attribute of `graph` has a surface form.
    pub fn check(&self, graph: &SceneGraph) -> Result<()> {
        for p in graph.predicates.iter() {
            self.predicate(p)?;
        }
        for a in graph.attributes.iter() {
            self.attribute(a)?;
        }
        Ok(())
    }

    fn predicate(&self, name: &str) -> Result<&str> {
        self.predicates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Lexicon(format!("no surface form for predicate {name:?}")))
    }

    fn attribute(&self, name: &str) -> Result<&str> {
        self.attributes
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Lexicon(format!("no surface form for attribute {name:?}")))
    }

    fn noun(&self, node: &SceneNode) -> String {
        format!("{} {}", self.article, node.label).to_lowercase()
    }
}

/// "the credit card is underneath the newspaper"
pub fn render_relation(triple: &RelationTriple, lexicon: &PhraseLexicon, graph: &SceneGraph) -> Result<String> {
    let s = graph.require_node(triple.subject)?;
    let o = graph.require_node(triple.object)?;
    let p = lexicon.predicate(&triple.predicate)?;
    Ok(format!("{} {} {}", lexicon.noun(s), p.to_lowercase(), lexicon.noun(o)))
}

/// "the vase is fragile"
pub fn render_attribute(node: &SceneNode, lexicon: &PhraseLexicon) -> Result<String> {
    Ok(format!("{} {}", lexicon.noun(node), lexicon.attribute(&node.attribute)?.to_lowercase()))
}

/// "a", "a and b", "a, b and c"
fn join(phrases: &[String]) -> String {
    match phrases {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn sentence(label: &str, phrases: &[String]) -> String {
    let label = label.to_lowercase();
    if phrases.is_empty() {
        format!("The robot could not pick up the {label}.")
    } else {
        format!("The robot could not pick up the {label} because {}.", join(phrases))
    }
}

fn attribute_of(node: &SceneNode) -> Option<String> {
    (node.attribute != NO_ATTRIBUTE).then(|| node.attribute.clone())
}

fn render(
    graph: &SceneGraph,
    node: &SceneNode,
    relations: Vec<RelationTriple>,
    attribute: Option<String>,
    variant: Variant,
    lexicon: &PhraseLexicon,
) -> Result<Explanation> {
    let mut phrases = relations
        .iter()
        .map(|t| render_relation(t, lexicon, graph))
        .collect::<Result<Vec<_>>>()?;
    if attribute.is_some() {
        phrases.push(render_attribute(node, lexicon)?);
    }
    Ok(Explanation {
        variant,
        text: sentence(&node.label, &phrases),
        supporting_relations: relations,
        supporting_attribute: attribute,
    })
}

/// Every relation around `desired`, in graph order, then its attribute.
pub fn generate_ssg(graph: &SceneGraph, desired: NodeId, lexicon: &PhraseLexicon) -> Result<Explanation> {
    let node = graph.require_node(desired)?;
    render(graph, node, triples_containing(graph, desired)?, attribute_of(node), Variant::Ssg, lexicon)
}

/// Only the top-ranked candidates: relations in tie order, then the
/// attribute if the attribute item is among them.
pub fn generate_ssg_r(
    graph: &SceneGraph,
    desired: NodeId,
    voter: &impl PairVoter,
    order: PairOrder,
    lexicon: &PhraseLexicon,
) -> Result<Explanation> {
    let node = graph.require_node(desired)?;
    voter.check_graph(graph)?;
    let cands = ranking::candidates(graph, desired, &graph.predicates, &graph.attributes)?;
    if cands.is_empty() {
        return render(graph, node, Vec::new(), None, Variant::SsgR, lexicon);
    }
    let top = ranking::top_ranked(&ranking::pairwise_rank(&cands, voter, order)?)?;
    let mut relations = Vec::new();
    let mut attribute = None;
    for item in top {
        match item {
            RankItem::Relation { triple } => relations.push(triple),
            RankItem::Attribute { attribute: a, .. } => attribute = Some(a),
        }
    }
    render(graph, node, relations, attribute, Variant::SsgR, lexicon)
}

/// Fixed phrase for the first spatial cause, or a generic one when there is none.
pub fn generate_cb(scenario: &FailureScenario) -> Explanation {
    let label = scenario.desired_node().label.to_lowercase();
    let phrase = match scenario.spatial_causes().next().map(|t| t.predicate.as_str()) {
        Some("underneath") => format!("the {label} is occluded"),
        Some("in" | "inside") => format!("the {label} is in a closed container"),
        _ => format!("the {label} cannot be picked"),
    };
    Explanation {
        variant: Variant::Cb,
        text: sentence(&label, &[phrase]),
        supporting_relations: Vec::new(),
        supporting_attribute: None,
    }
}

pub fn generate_none(_scenario: &FailureScenario) -> Explanation {
    Explanation {
        variant: Variant::None,
        text: String::new(),
        supporting_relations: Vec::new(),
        supporting_attribute: None,
    }
}
