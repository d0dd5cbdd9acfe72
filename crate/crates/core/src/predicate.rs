//! Predicate and attribute classification from ground-truth boxes and labels.
//!
//! This stands in for an image-based scene graph network: the inputs are the
//! same (boxes plus object labels) but the classifier is a random forest over
//! hand-built pair features. Pairs without a relation get the extra class
//! [`NONE_REL`].

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{self, Dataset, ForestModel, ForestParams};
use crate::scene::{
    AttributeVocabulary, BoundingBox2D, FailureScenario, NodeId, PredicateVocabulary, RelationTriple, SceneGraph, SceneNode,
    Vocabulary,
};
use crate::{fileio, seed, FORMAT_VERSION};

/// Class for ordered pairs that carry no relation.
pub const NONE_REL: &str = "none_rel";

/// Pixel length that geometric features are divided by.
pub const REFERENCE_SCALE: f64 = 100.0;

/// Number of geometric entries at the front of every [`PairFeatures`] vector.
pub const PAIR_GEOMETRY_LEN: usize = 21;

/// Forest settings used for the predicate model unless overridden: pair
/// features are wide and mostly one-hot, so each split looks at more of them.
pub fn default_predicate_params() -> ForestParams {
    ForestParams {
        max_depth: 20,
        feature_subsample: Some(20),
        ..ForestParams::default()
    }
}

/// Feature vector for an ordered node pair `(i, j)`:
///
/// | index | feature |
/// |---|---|
/// | 0, 1 | center offset `(cx_j - cx_i, cy_j - cy_i)` / reference scale |
/// | 2, 3 | size ratios `w_i / w_j`, `h_i / h_j` |
/// | 4 | intersection over union |
/// | 5, 6 | `i` inside `j`, `j` inside `i` (0 or 1) |
/// | 7 | center distance / reference scale |
/// | 8 | bottom-edge offset / reference scale |
/// | 9 | fraction of `i` covered by `j` |
/// | 10 | fraction of `j` covered by `i` |
/// | 11, 12 | left-edge and top-edge offsets / reference scale |
/// | 13 | right-edge offset / reference scale |
/// | 14 | `ln(area_i / area_j)` |
/// | 15, 16 | horizontal overlap / `w_i`, horizontal overlap / `w_j` |
/// | 17 | bottom edge of `i` relative to `j`'s box: `(bottom_i - y_j) / h_j` |
/// | 18 | bottom edge of `j` relative to `i`'s box: `(bottom_j - y_i) / h_i` |
/// | 19, 20 | bottom edge of `i` rests within `j`'s box, and the reverse (0 or 1) |
///
/// followed by the one-hot subject label and the one-hot object label.
/// IoU, containment and distance are symmetric under swapping the pair;
/// offsets change sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures(pub Vec<f64>);

pub fn extract_pair_features(node_i: &SceneNode, node_j: &SceneNode, labels: &Vocabulary) -> Result<PairFeatures> {
    let (a, b) = (&node_i.bbox, &node_j.bbox);
    a.check()?;
    b.check()?;
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let (dx, dy) = ((bx - ax) / REFERENCE_SCALE, (by - ay) / REFERENCE_SCALE);
    let x_overlap = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let mut v = Vec::with_capacity(PAIR_GEOMETRY_LEN + 2 * labels.len());
    v.extend([
        dx,
        dy,
        a.w / b.w,
        a.h / b.h,
        a.iou(b),
        f64::from(u8::from(b.contains(a))),
        f64::from(u8::from(a.contains(b))),
        dx.hypot(dy),
        (b.bottom() - a.bottom()) / REFERENCE_SCALE,
        a.intersection_area(b) / a.area(),
        a.intersection_area(b) / b.area(),
        (b.x - a.x) / REFERENCE_SCALE,
        (b.y - a.y) / REFERENCE_SCALE,
        (b.right() - a.right()) / REFERENCE_SCALE,
        (a.area() / b.area()).ln(),
        x_overlap / a.w,
        x_overlap / b.w,
        (a.bottom() - b.y) / b.h,
        (b.bottom() - a.y) / a.h,
        f64::from(u8::from(rests_within(a, b))),
        f64::from(u8::from(rests_within(b, a))),
    ]);
    push_one_hot(&mut v, labels, &node_i.label);
    push_one_hot(&mut v, labels, &node_j.label);
    Ok(PairFeatures(v))
}

/// The whole bottom edge of `a` lies inside `b` (excluding `b`'s own bottom edge).
fn rests_within(a: &BoundingBox2D, b: &BoundingBox2D) -> bool {
    a.x >= b.x && a.right() <= b.right() && a.bottom() > b.y && a.bottom() < b.bottom()
}

/// Appends a one-hot block; unknown names give all zeros.
fn push_one_hot(v: &mut Vec<f64>, vocab: &Vocabulary, name: &str) {
    let at = v.len();
    v.resize(at + vocab.len(), 0.0);
    if let Some(i) = vocab.index_of(name) {
        v[at + i] = 1.0;
    }
}

fn node_features(node: &SceneNode, labels: &Vocabulary) -> Vec<f64> {
    let b = &node.bbox;
    let mut v = vec![b.w / REFERENCE_SCALE, b.h / REFERENCE_SCALE, b.w / b.h];
    push_one_hot(&mut v, labels, &node.label);
    v
}

/// Every ordered pair of distinct nodes, in node order.
pub fn all_pairs(graph: &SceneGraph) -> Vec<(NodeId, NodeId)> {
    let mut pairs = Vec::new();
    for a in &graph.nodes {
        for b in &graph.nodes {
            if a.id != b.id {
                pairs.push((a.id, b.id));
            }
        }
    }
    pairs
}

fn label_vocabulary<'a>(scenarios: impl Iterator<Item = &'a FailureScenario>) -> Result<Vocabulary> {
    let labels: BTreeSet<&str> = scenarios
        .flat_map(|s| s.graph.nodes.iter().map(|n| n.label.as_str()))
        .collect();
    Vocabulary::new(labels)
}

fn shared_vocabularies<'a>(
    scenarios: &[&'a FailureScenario],
) -> Result<(&'a PredicateVocabulary, &'a AttributeVocabulary)> {
    let first = scenarios.first().ok_or(Error::Empty("training scenes"))?;
    for s in scenarios {
        if s.graph.predicates != first.graph.predicates || s.graph.attributes != first.graph.attributes {
            return Err(Error::VocabularyMismatch("training scenes disagree on vocabularies".into()));
        }
    }
    Ok((&first.graph.predicates, &first.graph.attributes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateModel {
    pub predicates: PredicateVocabulary,
    pub labels: Vocabulary,
    pub forest: ForestModel,
}

impl PredicateModel {
    /// Predicate classes followed by [`NONE_REL`].
    pub fn classes(&self) -> Vec<String> {
        let mut c = self.predicates.names().to_vec();
        c.push(NONE_REL.to_string());
        c
    }

    fn class_name(&self, class: usize) -> &str {
        self.predicates.name(class).unwrap_or(NONE_REL)
    }

    fn truth_class(&self, graph: &SceneGraph, i: NodeId, j: NodeId) -> usize {
        graph
            .triples
            .iter()
            .find(|t| t.subject == i && t.object == j)
            .and_then(|t| self.predicates.index_of(&t.predicate))
            .unwrap_or(self.predicates.len())
    }

    fn check_vocab(&self, graph: &SceneGraph) -> Result<()> {
        if graph.predicates != self.predicates {
            return Err(Error::VocabularyMismatch(format!(
                "model predicates {:?}, scene predicates {:?}",
                self.predicates.names(),
                graph.predicates.names()
            )));
        }
        Ok(())
    }
}

fn predicate_dataset(scenarios: &[&FailureScenario], predicates: &PredicateVocabulary, labels: &Vocabulary) -> Result<Dataset> {
    let mut data = Dataset::new(predicates.len() + 1);
    for s in scenarios {
        let g = &s.graph;
        for (i, j) in all_pairs(g) {
            let f = extract_pair_features(g.require_node(i)?, g.require_node(j)?, labels)?;
            let class = g
                .triples
                .iter()
                .find(|t| t.subject == i && t.object == j)
                .and_then(|t| predicates.index_of(&t.predicate))
                .unwrap_or(predicates.len());
            data.push(f.0, class);
        }
    }
    Ok(data)
}

pub fn train_predicate_model<'a>(
    scenarios: impl IntoIterator<Item = &'a FailureScenario>,
    params: &ForestParams,
    seed: u64,
) -> Result<PredicateModel> {
    let scenarios: Vec<&FailureScenario> = scenarios.into_iter().collect();
    let (predicates, _) = shared_vocabularies(&scenarios)?;
    let labels = label_vocabulary(scenarios.iter().copied())?;
    let data = predicate_dataset(&scenarios, predicates, &labels)?;
    let forest = forest::train_forest(&data, params, seed)?;
    Ok(PredicateModel {
        predicates: predicates.clone(),
        labels,
        forest,
    })
}

/// Training-split pair dataset, exposed for hyperparameter search.
pub fn predicate_training_data<'a>(scenarios: impl IntoIterator<Item = &'a FailureScenario>) -> Result<Dataset> {
    let scenarios: Vec<&FailureScenario> = scenarios.into_iter().collect();
    let (predicates, _) = shared_vocabularies(&scenarios)?;
    let labels = label_vocabulary(scenarios.iter().copied())?;
    predicate_dataset(&scenarios, predicates, &labels)
}

/// One prediction per candidate pair; the predicate is [`NONE_REL`] when the
/// model abstains.
pub fn classify_predicates(model: &PredicateModel, graph: &SceneGraph, pairs: &[(NodeId, NodeId)]) -> Result<Vec<RelationTriple>> {
    model.check_vocab(graph)?;
    pairs
        .iter()
        .map(|&(i, j)| {
            let f = extract_pair_features(graph.require_node(i)?, graph.require_node(j)?, &model.labels)?;
            let class = model.forest.predict(&f.0);
            Ok(RelationTriple::new(i, model.class_name(class), j))
        })
        .collect()
}

/// Rebuilds `graph` with predicted triples over all pairs (abstentions dropped).
pub fn predict_graph(model: &PredicateModel, graph: &SceneGraph) -> Result<SceneGraph> {
    let triples = classify_predicates(model, graph, &all_pairs(graph))?
        .into_iter()
        .filter(|t| t.predicate != NONE_REL)
        .collect();
    Ok(SceneGraph::new(
        graph.predicates.clone(),
        graph.attributes.clone(),
        graph.nodes.clone(),
        triples,
    ))
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn row_sum(&self, truth: usize) -> usize {
        self.counts[truth].iter().sum()
    }

    /// Count for a `(truth, predicted)` pair of class names.
    pub fn get(&self, truth: &str, predicted: &str) -> Option<usize> {
        let t = self.classes.iter().position(|c| c == truth)?;
        let p = self.classes.iter().position(|c| c == predicted)?;
        Some(self.counts[t][p])
    }

    /// Header `truth,<predicted classes...>`, then one row per ground-truth class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateEvaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Scores the model on every related pair of the test scenes (the pairs that
/// carry a ground-truth triple). With `include_unrelated`, all other ordered
/// pairs are scored as [`NONE_REL`] too.
pub fn evaluate_predicates<'a>(
    model: &PredicateModel,
    scenes: impl IntoIterator<Item = &'a FailureScenario>,
    include_unrelated: bool,
) -> Result<PredicateEvaluation> {
    let mut confusion = ConfusionMatrix::new(model.classes());
    for s in scenes {
        let g = &s.graph;
        let pairs: Vec<(NodeId, NodeId)> = if include_unrelated {
            all_pairs(g)
        } else {
            g.triples.iter().map(|t| (t.subject, t.object)).collect()
        };
        let predicted = classify_predicates(model, g, &pairs)?;
        for (t, &(i, j)) in predicted.iter().zip(&pairs) {
            let p = model.predicates.index_of(&t.predicate).unwrap_or(model.predicates.len());
            confusion.record(model.truth_class(g, i, j), p);
        }
    }
    if confusion.total() == 0 {
        return Err(Error::Empty("predicate test set"));
    }
    Ok(PredicateEvaluation {
        accuracy: confusion.accuracy(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeModel {
    pub attributes: AttributeVocabulary,
    pub labels: Vocabulary,
    pub forest: ForestModel,
    /// Most frequent training attribute; returned for unseen labels.
    pub prior: usize,
}

pub fn train_attribute_model<'a>(
    scenarios: impl IntoIterator<Item = &'a FailureScenario>,
    params: &ForestParams,
    seed: u64,
) -> Result<AttributeModel> {
    let scenarios: Vec<&FailureScenario> = scenarios.into_iter().collect();
    let (_, attributes) = shared_vocabularies(&scenarios)?;
    let labels = label_vocabulary(scenarios.iter().copied())?;
    let mut data = Dataset::new(attributes.len());
    for s in &scenarios {
        for n in &s.graph.nodes {
            let class = attributes
                .index_of(&n.attribute)
                .ok_or_else(|| Error::VocabularyMismatch(format!("attribute {:?}", n.attribute)))?;
            data.push(node_features(n, &labels), class);
        }
    }
    let counts = data.class_counts();
    let prior = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    let forest = forest::train_forest(&data, params, seed)?;
    Ok(AttributeModel {
        attributes: attributes.clone(),
        labels,
        forest,
        prior,
    })
}

/// One attribute per node. Labels the model never saw get the prior class.
pub fn classify_attributes(model: &AttributeModel, nodes: &[SceneNode]) -> Result<Vec<String>> {
    nodes
        .iter()
        .map(|n| {
            n.bbox.check()?;
            let class = if model.labels.contains(&n.label) {
                model.forest.predict(&node_features(n, &model.labels))
            } else {
                model.prior
            };
            Ok(model.attributes.name(class).expect("class in range").to_string())
        })
        .collect()
}

pub fn evaluate_attributes<'a>(model: &AttributeModel, scenes: impl IntoIterator<Item = &'a FailureScenario>) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in scenes {
        let predicted = classify_attributes(model, &s.graph.nodes)?;
        for (n, p) in s.graph.nodes.iter().zip(predicted) {
            total += 1;
            hits += usize::from(n.attribute == p);
        }
    }
    if total == 0 {
        return Err(Error::Empty("attribute test set"));
    }
    Ok(hits as f64 / total as f64)
}

/// Predicate and attribute models trained together and saved as one file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraphModel {
    pub predicate: PredicateModel,
    pub attribute: AttributeModel,
}

pub fn train_scene_graph_model<'a>(
    scenarios: impl IntoIterator<Item = &'a FailureScenario>,
    params: &ForestParams,
    seed: u64,
) -> Result<SceneGraphModel> {
    let scenarios: Vec<&FailureScenario> = scenarios.into_iter().collect();
    Ok(SceneGraphModel {
        predicate: train_predicate_model(scenarios.iter().copied(), params, seed::derive(seed, 0))?,
        attribute: train_attribute_model(scenarios.iter().copied(), params, seed::derive(seed, 1))?,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    predicates: Vec<String>,
    attributes: Vec<String>,
    labels: Vec<String>,
    predicate_forest: ForestModel,
    attribute_forest: ForestModel,
    attribute_prior: usize,
}

impl SceneGraphModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            predicates: self.predicate.predicates.names().to_vec(),
            attributes: self.attribute.attributes.names().to_vec(),
            labels: self.predicate.labels.names().to_vec(),
            predicate_forest: self.predicate.forest.clone(),
            attribute_forest: self.attribute.forest.clone(),
            attribute_prior: self.attribute.prior,
        };
        let mut text = serde_json::to_string(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = fileio::from_versioned_json(text)?;
        let labels = Vocabulary::new(doc.labels)?;
        let predicates = PredicateVocabulary::new(doc.predicates)?;
        let attributes = AttributeVocabulary::new(doc.attributes)?;
        let expect = |forest: &ForestModel, features: usize, classes: usize, what: &str| {
            if forest.n_features != features || forest.n_classes != classes {
                Err(Error::VocabularyMismatch(format!("{what} forest shape does not match its vocabularies")))
            } else {
                Ok(())
            }
        };
        expect(&doc.predicate_forest, PAIR_GEOMETRY_LEN + 2 * labels.len(), predicates.len() + 1, "predicate")?;
        expect(&doc.attribute_forest, 3 + labels.len(), attributes.len(), "attribute")?;
        if doc.attribute_prior >= attributes.len() {
            return Err(Error::VocabularyMismatch("attribute prior out of range".into()));
        }
        Ok(SceneGraphModel {
            predicate: PredicateModel {
                predicates,
                labels: labels.clone(),
                forest: doc.predicate_forest,
            },
            attribute: AttributeModel {
                attributes,
                labels,
                forest: doc.attribute_forest,
                prior: doc.attribute_prior,
            },
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
mod tests {
    use super::*;

    fn node(id: NodeId, label: &str, bbox: (f64, f64, f64, f64)) -> SceneNode {
        SceneNode {
            id,
            bbox: BoundingBox2D::new(bbox.0, bbox.1, bbox.2, bbox.3).unwrap(),
            label: label.into(),
            attribute: "none".into(),
        }
    }

    fn labels() -> Vocabulary {
        Vocabulary::new(["cup", "mug"]).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let a = node(0, "cup", (3.0, 4.0, 10.0, 20.0));
        let f = extract_pair_features(&a, &a.clone(), &labels()).unwrap().0;
        assert_eq!(f[4], 1.0);
        assert_eq!((f[0], f[1]), (0.0, 0.0));
        assert_eq!((f[2], f[3]), (1.0, 1.0));
        assert_eq!(f.len(), PAIR_GEOMETRY_LEN + 4);
    }

    #[test]
    fn disjoint_and_half_overlapping_boxes() {
        let a = node(0, "cup", (0.0, 0.0, 10.0, 10.0));
        let far = node(1, "mug", (50.0, 50.0, 10.0, 10.0));
        assert_eq!(extract_pair_features(&a, &far, &labels()).unwrap().0[4], 0.0);
        let b = node(1, "mug", (5.0, 0.0, 10.0, 10.0));
        let iou = extract_pair_features(&a, &b, &labels()).unwrap().0[4];
        assert!((iou - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_the_pair_keeps_symmetric_fields() {
        let a = node(0, "cup", (0.0, 0.0, 10.0, 30.0));
        let b = node(1, "mug", (4.0, 7.0, 20.0, 10.0));
        let ab = extract_pair_features(&a, &b, &labels()).unwrap().0;
        let ba = extract_pair_features(&b, &a, &labels()).unwrap().0;
        assert_eq!(ab[4], ba[4]);
        assert_eq!(ab[7], ba[7]);
        assert_eq!(ab[0], -ba[0]);
        assert_eq!(ab[1], -ba[1]);
        assert_eq!((ab[5], ab[6]), (ba[6], ba[5]));
    }

    #[test]
    fn one_hot_labels_and_unknowns() {
        let a = node(0, "mug", (0.0, 0.0, 10.0, 10.0));
        let b = node(1, "teapot", (0.0, 0.0, 10.0, 10.0));
        let f = extract_pair_features(&a, &b, &labels()).unwrap().0;
        assert_eq!(&f[PAIR_GEOMETRY_LEN..], &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_area_box_is_rejected() {
        let a = node(0, "cup", (0.0, 0.0, 10.0, 10.0));
        let mut b = a.clone();
        b.bbox.w = 0.0;
        assert!(matches!(extract_pair_features(&a, &b, &labels()), Err(Error::InvalidBox(_))));
    }

    #[test]
    fn confusion_matrix_bookkeeping() {
        let mut m = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
        m.record(0, 0);
        m.record(0, 1);
        m.record(1, 1);
        assert_eq!(m.row_sum(0), 2);
        assert_eq!(m.trace(), 2);
        assert!((m.accuracy() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.get("a", "b"), Some(1));
        assert_eq!(m.to_csv(), "truth,a,b\na,1,1\nb,0,1\n");
    }

    mod trained {
        use std::sync::OnceLock;

        use super::*;
        use crate::synth::{build_corpus, Corpus, GeneratorConfig, Split};

        fn fixture() -> &'static (Corpus, SceneGraphModel) {
            static CELL: OnceLock<(Corpus, SceneGraphModel)> = OnceLock::new();
            CELL.get_or_init(|| {
                let corpus = build_corpus(&GeneratorConfig::default(), 400, 7).unwrap();
                let model = train_scene_graph_model(corpus.split(Split::Train), &default_predicate_params(), 7).unwrap();
                (corpus, model)
            })
        }

        #[test]
        fn stacked_pairs_are_classified_on() {
            let (corpus, model) = fixture();
            let (mut hits, mut n) = (0, 0);
            for s in corpus.split(Split::Test) {
                let g = &s.graph;
                for t in g.triples.iter().filter(|t| t.predicate == "on") {
                    let (a, b) = (g.node(t.subject).unwrap(), g.node(t.object).unwrap());
                    if a.bbox.iou(&b.bbox) < 0.05 || a.bbox.y > b.bbox.y {
                        continue;
                    }
                    n += 1;
                    let p = classify_predicates(&model.predicate, g, &[(t.subject, t.object)]).unwrap();
                    hits += usize::from(p[0].predicate == "on");
                }
            }
            assert!(n >= 50, "only {n} stacked pairs");
            let acc = hits as f64 / n as f64;
            assert!(acc >= 0.9, "stacked accuracy {acc} over {n} pairs");
        }

        #[test]
        fn distant_pairs_are_mostly_unrelated() {
            let (corpus, model) = fixture();
            let eval = evaluate_predicates(&model.predicate, corpus.split(Split::Test), true).unwrap();
            let row = eval.confusion.classes.len() - 1;
            let none = eval.confusion.counts[row][row];
            assert!(2 * none > eval.confusion.row_sum(row));
        }

        #[test]
        fn row_sums_match_ground_truth_counts() {
            let (corpus, model) = fixture();
            let eval = evaluate_predicates(&model.predicate, corpus.split(Split::Test), false).unwrap();
            let m = &eval.confusion;
            for (i, class) in m.classes.iter().enumerate() {
                let truth = corpus
                    .split(Split::Test)
                    .flat_map(|s| &s.graph.triples)
                    .filter(|t| &t.predicate == class)
                    .count();
                assert_eq!(m.row_sum(i), truth, "{class}");
            }
            let diagonal: usize = (0..m.classes.len()).map(|i| m.counts[i][i]).sum();
            assert_eq!(eval.accuracy, diagonal as f64 / m.total() as f64);
        }

        #[test]
        fn empty_candidates_and_vocabulary_mismatch() {
            let (corpus, model) = fixture();
            let g = &corpus.scenes[0].scenario.graph;
            assert!(classify_predicates(&model.predicate, g, &[]).unwrap().is_empty());
            let mut other = g.clone();
            other.predicates = PredicateVocabulary::new(["on", "under"]).unwrap();
            assert!(matches!(
                classify_predicates(&model.predicate, &other, &[(0, 1)]),
                Err(Error::VocabularyMismatch(_))
            ));
        }

        #[test]
        fn predicted_graph_keeps_nodes() {
            let (corpus, model) = fixture();
            let g = &corpus.scenes[0].scenario.graph;
            let p = predict_graph(&model.predicate, g).unwrap();
            assert_eq!(p.nodes, g.nodes);
            assert!(p.triples.iter().all(|t| t.predicate != NONE_REL));
        }

        #[test]
        fn model_file_round_trips() {
            let (_, model) = fixture();
            let text = model.to_json().unwrap();
            let back = SceneGraphModel::from_json(&text).unwrap();
            assert_eq!(&back, model);
            assert_eq!(back.to_json().unwrap(), text);
            let old = text.replacen("\"format_version\":1", "\"format_version\":0", 1);
            assert!(matches!(SceneGraphModel::from_json(&old), Err(Error::FormatVersion { .. })));
        }

        #[test]
        fn unseen_labels_get_the_prior() {
            let (_, model) = fixture();
            let n = node(0, "teapot", (0.0, 0.0, 30.0, 40.0));
            let got = classify_attributes(&model.attribute, &[n]).unwrap();
            assert_eq!(got, vec![model.attribute.attributes.name(model.attribute.prior).unwrap()]);
            assert_eq!(model.attribute.attributes.name(model.attribute.prior), Some("none"));
            assert!(classify_attributes(&model.attribute, &[]).unwrap().is_empty());
        }
    }

    #[test]
    fn vases_are_fragile_when_all_training_vases_are() {
        use crate::synth::{build_corpus, GeneratorConfig, Split};
        let config = GeneratorConfig {
            attribute_rate: 1.0,
            ..GeneratorConfig::default()
        };
        let corpus = build_corpus(&config, 60, 3).unwrap();
        assert!(corpus.scenarios().flat_map(|s| &s.graph.nodes).filter(|n| n.label == "vase").all(|n| n.attribute == "fragile"));
        let model = train_attribute_model(corpus.split(Split::Train), &ForestParams::default(), 3).unwrap();
        let vases: Vec<SceneNode> = corpus
            .split(Split::Test)
            .flat_map(|s| s.graph.nodes.iter().filter(|n| n.label == "vase").cloned())
            .collect();
        assert!(!vases.is_empty());
        let predicted = classify_attributes(&model, &vases).unwrap();
        let hits = predicted.iter().filter(|a| *a == "fragile").count();
        assert!(hits as f64 / vases.len() as f64 >= 0.95);
        assert!(evaluate_attributes(&model, corpus.split(Split::Test)).unwrap() >= 0.95);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let classes: Vec<String> = ["on", "in", "underneath", "near", "close_to", "inside"].map(String::from).to_vec();
        let mut perfect = ConfusionMatrix::new(classes.clone());
        let mut constant = ConfusionMatrix::new(classes);
        for truth in 0..6 {
            for _ in 0..10 {
                perfect.record(truth, truth);
                constant.record(truth, 3);
            }
        }
        assert_eq!(perfect.accuracy(), 1.0);
        assert!((0..6).all(|i| (0..6).all(|j| (perfect.counts[i][j] > 0) == (i == j))));
        assert!((constant.accuracy() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn training_rejects_mixed_vocabularies() {
        use crate::synth::{generate_scene, GeneratorConfig};
        let (_, a) = generate_scene(&GeneratorConfig::default(), 1).unwrap();
        let mut b = a.clone();
        b.graph.predicates = PredicateVocabulary::new(["on", "in", "underneath", "near", "close_to", "inside", "left_of"]).unwrap();
        assert!(matches!(
            train_predicate_model([&a, &b], &ForestParams::default(), 0),
            Err(Error::VocabularyMismatch(_))
        ));
        assert!(matches!(
            train_predicate_model(std::iter::empty(), &ForestParams::default(), 0),
            Err(Error::Empty(_))
        ));
    }
}
