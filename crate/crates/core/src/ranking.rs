//! Pairwise ranking of the relations around a desired object.
//!
//! Every pair of candidates is shown to three one-vs-one classifiers over the
//! labels 0 (first preferred), 1 (second preferred) and 2 (tie). A vote for 0
//! credits the first candidate, 1 the second, and 2 both. The candidates are
//! then sorted by their credit, highest first.
//!
//! Candidates are the triples that mention the desired object plus, when the
//! object carries an attribute, one attribute item. The attribute item lets a
//! ranked explanation keep or drop the attribute phrase on the same footing
//! as the relations.

use std::cmp::Reverse;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{self, Dataset, ForestModel, ForestParams};
use crate::scene::{
    triples_containing, AttributeVocabulary, FailureCause, FailureScenario, NodeId, PredicateVocabulary,
    RelationTriple, SceneGraph, NO_ATTRIBUTE,
};
use crate::{fileio, seed, FORMAT_VERSION};

/// Label pairs of the three one-vs-one classifiers, in ensemble order.
pub const LABEL_PAIRS: [(u8, u8); 3] = [(0, 1), (0, 2), (1, 2)];

pub const PREFER_FIRST: u8 = 0;
pub const PREFER_SECOND: u8 = 1;
pub const TIE: u8 = 2;

/// Something that can be ranked: a relation, or the desired object's attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankItem {
    Relation { triple: RelationTriple },
    Attribute { node: NodeId, attribute: String },
}

impl RankItem {
    pub fn relation(&self) -> Option<&RelationTriple> {
        match self {
            RankItem::Relation { triple } => Some(triple),
            RankItem::Attribute { .. } => None,
        }
    }

    /// True when the item is one of the scenario's failure causes.
    pub fn grounds_cause(&self, causes: &[FailureCause]) -> bool {
        causes.iter().any(|c| match (self, c) {
            (RankItem::Relation { triple }, FailureCause::Spatial(t)) => triple == t,
            (RankItem::Attribute { node, attribute }, FailureCause::Attribute { node: n, attribute: a }) => {
                node == n && attribute == a
            }
            _ => false,
        })
    }
}

/// Predicate one-hot, then subject attribute one-hot, then object attribute
/// one-hot: three hot bits for a relation. An attribute item has an all-zero
/// predicate block and its attribute hot in both attribute blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationFeatures(pub Vec<f64>);

/// A ranking candidate with its features and tie-break key
/// `(subject, predicate index, object)`; attribute items use the predicate
/// count as their predicate index, so they sort after relations of the same
/// subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub item: RankItem,
    pub features: RelationFeatures,
    pub key: (NodeId, usize, NodeId),
}

fn attribute_index(attributes: &AttributeVocabulary, name: &str) -> Result<usize> {
    attributes
        .index_of(name)
        .ok_or_else(|| Error::VocabularyMismatch(format!("attribute {name:?} not in vocabulary")))
}

pub fn relation_features(
    triple: &RelationTriple,
    graph: &SceneGraph,
    predicates: &PredicateVocabulary,
    attributes: &AttributeVocabulary,
) -> Result<RelationFeatures> {
    let (p, a) = (predicates.len(), attributes.len());
    let pi = predicates
        .index_of(&triple.predicate)
        .ok_or_else(|| Error::VocabularyMismatch(format!("predicate {:?} not in vocabulary", triple.predicate)))?;
    let si = attribute_index(attributes, &graph.require_node(triple.subject)?.attribute)?;
    let oi = attribute_index(attributes, &graph.require_node(triple.object)?.attribute)?;
    let mut v = vec![0.0; p + 2 * a];
    v[pi] = 1.0;
    v[p + si] = 1.0;
    v[p + a + oi] = 1.0;
    Ok(RelationFeatures(v))
}

fn attribute_features(attribute: &str, predicates: &PredicateVocabulary, attributes: &AttributeVocabulary) -> Result<RelationFeatures> {
    let (p, a) = (predicates.len(), attributes.len());
    let i = attribute_index(attributes, attribute)?;
    let mut v = vec![0.0; p + 2 * a];
    v[p + i] = 1.0;
    v[p + a + i] = 1.0;
    Ok(RelationFeatures(v))
}

/// Candidates for `desired`: its triples in graph order, then its attribute
/// when that is not `none`.
pub fn candidates(
    graph: &SceneGraph,
    desired: NodeId,
    predicates: &PredicateVocabulary,
    attributes: &AttributeVocabulary,
) -> Result<Vec<Candidate>> {
    let node = graph.require_node(desired)?;
    let mut out = Vec::new();
    for triple in triples_containing(graph, desired)? {
        let features = relation_features(&triple, graph, predicates, attributes)?;
        let key = (triple.subject, predicates.index_of(&triple.predicate).unwrap_or(0), triple.object);
        out.push(Candidate {
            item: RankItem::Relation { triple },
            features,
            key,
        });
    }
    if node.attribute != NO_ATTRIBUTE {
        out.push(Candidate {
            features: attribute_features(&node.attribute, predicates, attributes)?,
            key: (desired, predicates.len(), desired),
            item: RankItem::Attribute {
                node: desired,
                attribute: node.attribute.clone(),
            },
        });
    }
    Ok(out)
}

/// Ground-truth preference between two candidates of a scenario.
pub fn preference_label(k: &RankItem, m: &RankItem, causes: &[FailureCause]) -> u8 {
    match (k.grounds_cause(causes), m.grounds_cause(causes)) {
        (true, false) => PREFER_FIRST,
        (false, true) => PREFER_SECOND,
        _ => TIE,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub first: RelationFeatures,
    pub second: RelationFeatures,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerTrainingSet {
    pub predicates: PredicateVocabulary,
    pub attributes: AttributeVocabulary,
    pub pairs: Vec<TrainingPair>,
}

/// One labeled pair per unordered candidate pair `k < m` of every scenario.
pub fn build_training_pairs<'a>(scenarios: impl IntoIterator<Item = &'a FailureScenario>) -> Result<RankerTrainingSet> {
    let mut vocab: Option<(PredicateVocabulary, AttributeVocabulary)> = None;
    let mut pairs = Vec::new();
    for s in scenarios {
        let g = &s.graph;
        let (predicates, attributes) = vocab.get_or_insert_with(|| (g.predicates.clone(), g.attributes.clone()));
        if g.predicates != *predicates || g.attributes != *attributes {
            return Err(Error::VocabularyMismatch("training scenes disagree on vocabularies".into()));
        }
        let cands = candidates(g, s.desired_object, predicates, attributes)?;
        for (k, a) in cands.iter().enumerate() {
            for b in &cands[k + 1..] {
                pairs.push(TrainingPair {
                    first: a.features.clone(),
                    second: b.features.clone(),
                    label: preference_label(&a.item, &b.item, &s.causes),
                });
            }
        }
    }
    let (predicates, attributes) = vocab.ok_or(Error::Empty("training scenes"))?;
    Ok(RankerTrainingSet {
        predicates,
        attributes,
        pairs,
    })
}

fn concat(a: &RelationFeatures, b: &RelationFeatures) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.0.len() + b.0.len());
    v.extend_from_slice(&a.0);
    v.extend_from_slice(&b.0);
    v
}

/// Rows for classifier `(a, b)`: pairs labeled `a` become class 0, `b` class 1.
pub fn classifier_dataset(pairs: &[TrainingPair], labels: (u8, u8)) -> Dataset {
    let mut data = Dataset::new(2);
    for p in pairs {
        if p.label == labels.0 {
            data.push(concat(&p.first, &p.second), 0);
        } else if p.label == labels.1 {
            data.push(concat(&p.first, &p.second), 1);
        }
    }
    data
}

/// The set plus every pair with its candidates exchanged and labels 0 and 1
/// exchanged. Training on it keeps classifier votes from depending on which
/// candidate comes first.
pub fn mirrored(set: &RankerTrainingSet) -> RankerTrainingSet {
    let mut pairs = set.pairs.clone();
    pairs.extend(set.pairs.iter().map(|p| TrainingPair {
        first: p.second.clone(),
        second: p.first.clone(),
        label: match p.label {
            PREFER_FIRST => PREFER_SECOND,
            PREFER_SECOND => PREFER_FIRST,
            l => l,
        },
    }));
    RankerTrainingSet {
        predicates: set.predicates.clone(),
        attributes: set.attributes.clone(),
        pairs,
    }
}

/// Three binary forests, one per entry of [`LABEL_PAIRS`].
#[derive(Debug, Clone, PartialEq)]
pub struct RankerEnsemble {
    pub predicates: PredicateVocabulary,
    pub attributes: AttributeVocabulary,
    pub classifiers: Vec<ForestModel>,
}

/// Trains the three classifiers. Each sees only the pairs carrying one of
/// its two labels, and both labels must occur.
pub fn train_ranker(set: &RankerTrainingSet, params: &ForestParams, seed: u64) -> Result<RankerEnsemble> {
    train_with(set, seed, |_, _| Ok(params.clone()))
}

/// As [`train_ranker`], picking each classifier's parameters from `grid` by
/// cross-validation.
pub fn train_ranker_cv(set: &RankerTrainingSet, grid: &[ForestParams], seed: u64) -> Result<RankerEnsemble> {
    train_with(set, seed, |data, s| forest::select_params(data, grid, s).map(|(p, _)| p))
}

fn train_with(
    set: &RankerTrainingSet,
    seed: u64,
    choose: impl Fn(&Dataset, u64) -> Result<ForestParams>,
) -> Result<RankerEnsemble> {
    let mut classifiers = Vec::with_capacity(3);
    for (i, &(a, b)) in LABEL_PAIRS.iter().enumerate() {
        let data = classifier_dataset(&set.pairs, (a, b));
        let counts = data.class_counts();
        if counts.contains(&0) {
            return Err(Error::MissingLabelPair(a, b));
        }
        let s = seed::derive(seed, i as u64);
        let params = choose(&data, s)?;
        classifiers.push(forest::train_forest(&data, &params, s)?);
    }
    Ok(RankerEnsemble {
        predicates: set.predicates.clone(),
        attributes: set.attributes.clone(),
        classifiers,
    })
}

/// Casts one classifier's vote on an ordered candidate pair.
pub trait PairVoter {
    /// `classifier` indexes [`LABEL_PAIRS`]; the result is one of that pair's labels.
    fn vote(&self, classifier: usize, first: &Candidate, second: &Candidate) -> Result<u8>;

    /// Fails when the voter cannot judge candidates built from `graph`.
    fn check_graph(&self, _graph: &SceneGraph) -> Result<()> {
        Ok(())
    }
}

impl PairVoter for RankerEnsemble {
    fn check_graph(&self, graph: &SceneGraph) -> Result<()> {
        if graph.predicates != self.predicates || graph.attributes != self.attributes {
            return Err(Error::VocabularyMismatch("scene vocabularies differ from the ranker's".into()));
        }
        Ok(())
    }

    fn vote(&self, classifier: usize, first: &Candidate, second: &Candidate) -> Result<u8> {
        let model = &self.classifiers[classifier];
        let row = concat(&first.features, &second.features);
        if row.len() != model.n_features {
            return Err(Error::VocabularyMismatch(format!(
                "ranker expects {} features per pair, got {}",
                model.n_features,
                row.len()
            )));
        }
        let (a, b) = LABEL_PAIRS[classifier];
        Ok(if model.predict(&row) == 0 { a } else { b })
    }
}

/// Votes from the ground-truth label of each pair. A classifier whose pair
/// contains the true label returns it; otherwise it says tie when it can, and
/// the {0, 1} classifier, which cannot, prefers the first candidate.
#[derive(Debug, Clone, Copy)]
pub struct OracleVoter<'a> {
    pub causes: &'a [FailureCause],
}

pub fn oracle_vote(labels: (u8, u8), truth: u8) -> u8 {
    if truth == labels.0 || truth == labels.1 {
        truth
    } else if labels.1 == TIE {
        TIE
    } else {
        labels.0
    }
}

impl PairVoter for OracleVoter<'_> {
    fn vote(&self, classifier: usize, first: &Candidate, second: &Candidate) -> Result<u8> {
        let truth = preference_label(&first.item, &second.item, self.causes);
        Ok(oracle_vote(LABEL_PAIRS[classifier], truth))
    }
}

/// Which candidate pairs are shown to the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    /// Every ordered pair `(k, m)` with `k != m`. A classifier that must pick
    /// a side on a tie then credits each candidate once, so tied candidates
    /// stay tied.
    #[default]
    Ordered,
    /// Only `k < m`: half the classifier calls, but a forced {0, 1} vote on a
    /// tie favors whichever candidate comes first.
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub item: RankItem,
    pub rank: u32,
}

/// Candidates sorted by rank descending, then by tie key ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRelationList {
    pub entries: Vec<RankedEntry>,
    /// Votes cast across all pairs and classifiers.
    pub votes: usize,
    pub tie_votes: usize,
}

pub fn pairwise_rank(cands: &[Candidate], voter: &impl PairVoter, order: PairOrder) -> Result<RankedRelationList> {
    if cands.is_empty() {
        return Err(Error::Empty("ranking subgraph"));
    }
    let mut rank = vec![0u32; cands.len()];
    let (mut votes, mut tie_votes) = (0, 0);
    for k in 0..cands.len() {
        for m in 0..cands.len() {
            let wanted = match order {
                PairOrder::Ordered => k != m,
                PairOrder::Unordered => k < m,
            };
            if !wanted {
                continue;
            }
            for c in 0..LABEL_PAIRS.len() {
                votes += 1;
                match voter.vote(c, &cands[k], &cands[m])? {
                    PREFER_FIRST => rank[k] += 1,
                    PREFER_SECOND => rank[m] += 1,
                    _ => {
                        rank[k] += 1;
                        rank[m] += 1;
                        tie_votes += 1;
                    }
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by_key(|&i| (Reverse(rank[i]), cands[i].key));
    Ok(RankedRelationList {
        entries: idx
            .into_iter()
            .map(|i| RankedEntry {
                item: cands[i].item.clone(),
                rank: rank[i],
            })
            .collect(),
        votes,
        tie_votes,
    })
}

/// Every entry sharing the maximum rank, in list order.
pub fn top_ranked(list: &RankedRelationList) -> Result<Vec<RankItem>> {
    let first = list.entries.first().ok_or(Error::Empty("ranked list"))?;
    Ok(list
        .entries
        .iter()
        .take_while(|e| e.rank == first.rank)
        .map(|e| e.item.clone())
        .collect())
}

/// Ranks the candidates of `desired` in `graph` with a trained ensemble.
pub fn rank_object(
    graph: &SceneGraph,
    desired: NodeId,
    ensemble: &RankerEnsemble,
    order: PairOrder,
) -> Result<RankedRelationList> {
    ensemble.check_graph(graph)?;
    let cands = candidates(graph, desired, &ensemble.predicates, &ensemble.attributes)?;
    pairwise_rank(&cands, ensemble, order)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankerDoc {
    format_version: u32,
    predicates: Vec<String>,
    attributes: Vec<String>,
    classifiers: Vec<ForestModel>,
}

impl RankerEnsemble {
    pub fn to_json(&self) -> Result<String> {
        let doc = RankerDoc {
            format_version: FORMAT_VERSION,
            predicates: self.predicates.names().to_vec(),
            attributes: self.attributes.names().to_vec(),
            classifiers: self.classifiers.clone(),
        };
        let mut text = serde_json::to_string(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RankerDoc = fileio::from_versioned_json(text)?;
        let predicates = PredicateVocabulary::new(doc.predicates)?;
        let attributes = AttributeVocabulary::new(doc.attributes)?;
        let width = 2 * (predicates.len() + 2 * attributes.len());
        if doc.classifiers.len() != LABEL_PAIRS.len()
            || doc.classifiers.iter().any(|c| c.n_features != width || c.n_classes != 2)
        {
            return Err(Error::VocabularyMismatch(
                "ranker needs three binary classifiers matching its vocabularies".into(),
            ));
        }
        Ok(RankerEnsemble {
            predicates,
            attributes,
            classifiers: doc.classifiers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fileio::write_string(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fileio::read_string(path)?)
    }
}

#[cfg(test)]
mod tests;
