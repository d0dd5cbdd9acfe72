use std::collections::HashSet;

use proptest::prelude::*;

use super::*;
use crate::scene::fixtures::{card_scene, node};
use crate::scene::SceneNode;

fn card_scenario() -> FailureScenario {
    FailureScenario::new(card_scene(), 0, vec![FailureCause::Spatial(RelationTriple::new(0, "underneath", 1))]).unwrap()
}

fn vocab() -> (PredicateVocabulary, AttributeVocabulary) {
    (PredicateVocabulary::default(), AttributeVocabulary::default())
}

/// A star graph around node 0 with one triple per entry of `predicates`.
fn star(predicates: &[&str]) -> SceneGraph {
    let mut nodes: Vec<SceneNode> = vec![node(0, "mug", "none")];
    let mut triples = Vec::new();
    for (i, p) in predicates.iter().enumerate() {
        let id = i as NodeId + 1;
        nodes.push(node(id, &format!("thing {id}"), "none"));
        triples.push(RelationTriple::new(0, *p, id));
    }
    SceneGraph::new(PredicateVocabulary::default(), AttributeVocabulary::default(), nodes, triples)
}

fn star_candidates(n: usize) -> (SceneGraph, Vec<Candidate>) {
    let preds = ["near", "close_to", "underneath", "in", "inside", "on"];
    let names: Vec<&str> = (0..n).map(|i| preds[i % preds.len()]).collect();
    let g = star(&names);
    let (p, a) = vocab();
    let c = candidates(&g, 0, &p, &a).unwrap();
    (g, c)
}

fn causes_for(cands: &[Candidate], is_cause: &[bool]) -> Vec<FailureCause> {
    cands
        .iter()
        .zip(is_cause)
        .filter(|(_, &c)| c)
        .map(|(c, _)| FailureCause::Spatial(c.item.relation().unwrap().clone()))
        .collect()
}

/// Rank of candidate `i` worked out per pair type, without running votes.
///
/// Per unordered pair `(k, m)`, `k < m`: cause against non-cause credits the
/// cause 3 and the other 1; two of a kind credit `k` 3 and `m` 2. Ordered
/// iteration sees each pair from both sides.
fn closed_form_rank(is_cause: &[bool], i: usize, order: PairOrder) -> u32 {
    let mut r = 0;
    for j in 0..is_cause.len() {
        if j == i {
            continue;
        }
        let vs = |first: usize, second: usize| -> (u32, u32) {
            match (is_cause[first], is_cause[second]) {
                (true, false) => (3, 1),
                (false, true) => (1, 3),
                _ => (3, 2),
            }
        };
        match order {
            PairOrder::Unordered => r += if i < j { vs(i, j).0 } else { vs(j, i).1 },
            PairOrder::Ordered => r += vs(i, j).0 + vs(j, i).1,
        }
    }
    r
}

#[test]
fn card_pair_prefers_the_occlusion() {
    let set = build_training_pairs([&card_scenario()]).unwrap();
    assert_eq!(set.pairs.len(), 1);
    assert_eq!(set.pairs[0].label, PREFER_FIRST);
}

#[test]
fn compound_and_neutral_pairs_are_ties() {
    let g = star(&["underneath", "in", "near"]);
    let both = vec![
        FailureCause::Spatial(RelationTriple::new(0, "underneath", 1)),
        FailureCause::Spatial(RelationTriple::new(0, "in", 2)),
    ];
    let items: Vec<RankItem> = g.triples.iter().map(|t| RankItem::Relation { triple: t.clone() }).collect();
    assert_eq!(preference_label(&items[0], &items[1], &both), TIE);
    assert_eq!(preference_label(&items[2], &items[0], &both), PREFER_SECOND);
    assert_eq!(preference_label(&items[2], &items[2], &both), TIE);
}

#[test]
fn empty_subgraph_contributes_nothing() {
    let g = star(&[]);
    let mut vase = g.clone();
    vase.nodes[0].attribute = "fragile".into();
    let s = FailureScenario::new(
        vase,
        0,
        vec![FailureCause::Attribute {
            node: 0,
            attribute: "fragile".into(),
        }],
    )
    .unwrap();
    assert!(build_training_pairs([&s]).unwrap().pairs.is_empty());
    assert!(matches!(build_training_pairs(std::iter::empty()), Err(Error::Empty(_))));
}

#[test]
fn relation_features_have_three_hot_bits() {
    let (p, a) = vocab();
    let g = card_scene();
    for t in &g.triples {
        let f = relation_features(t, &g, &p, &a).unwrap().0;
        assert_eq!(f.len(), p.len() + 2 * a.len());
        assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 3);
        assert_eq!(f.iter().sum::<f64>(), 3.0);
    }
}

#[test]
fn attribute_item_follows_relations() {
    let mut g = star(&["near"]);
    g.nodes[0].attribute = "hot".into();
    let (p, a) = vocab();
    let c = candidates(&g, 0, &p, &a).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(
        c[1].item,
        RankItem::Attribute {
            node: 0,
            attribute: "hot".into()
        }
    );
    assert_eq!(c[1].features.0.iter().sum::<f64>(), 2.0);
    assert!(c[1].key > c[0].key);
}

#[test]
fn singleton_has_rank_zero() {
    let (_, c) = star_candidates(1);
    for order in [PairOrder::Ordered, PairOrder::Unordered] {
        let list = pairwise_rank(&c, &OracleVoter { causes: &[] }, order).unwrap();
        assert_eq!(list.entries.len(), 1);
        assert_eq!(list.entries[0].rank, 0);
        assert_eq!(list.votes, 0);
    }
}

#[test]
fn empty_candidates_are_an_error() {
    assert!(matches!(
        pairwise_rank(&[], &OracleVoter { causes: &[] }, PairOrder::Ordered),
        Err(Error::Empty(_))
    ));
}

#[test]
fn one_cause_among_three_is_ranked_first() {
    let (_, c) = star_candidates(3);
    let is_cause = [false, false, true];
    let causes = causes_for(&c, &is_cause);
    let unordered = pairwise_rank(&c, &OracleVoter { causes: &causes }, PairOrder::Unordered).unwrap();
    assert_eq!(unordered.entries[0].item, c[2].item);
    assert_eq!(unordered.entries[0].rank, 6);
    let ordered = pairwise_rank(&c, &OracleVoter { causes: &causes }, PairOrder::Ordered).unwrap();
    assert_eq!(ordered.entries[0].item, c[2].item);
    assert_eq!(ordered.entries[0].rank, 12);
    assert_eq!(top_ranked(&ordered).unwrap(), vec![c[2].item.clone()]);
}

#[test]
fn compound_causes_share_the_top_rank() {
    let (_, c) = star_candidates(4);
    let is_cause = [false, true, false, true];
    let causes = causes_for(&c, &is_cause);
    let list = pairwise_rank(&c, &OracleVoter { causes: &causes }, PairOrder::Ordered).unwrap();
    let top: HashSet<RankItem> = top_ranked(&list).unwrap().into_iter().collect();
    assert_eq!(top, HashSet::from([c[1].item.clone(), c[3].item.clone()]));
    assert_eq!(list.entries[0].rank, list.entries[1].rank);
}

#[test]
fn unordered_pairs_split_a_compound_tie() {
    let (_, c) = star_candidates(4);
    let causes = causes_for(&c, &[false, true, false, true]);
    let list = pairwise_rank(&c, &OracleVoter { causes: &causes }, PairOrder::Unordered).unwrap();
    assert_eq!(top_ranked(&list).unwrap(), vec![c[1].item.clone()]);
}

fn list_with_ranks(ranks: &[u32]) -> RankedRelationList {
    RankedRelationList {
        entries: ranks
            .iter()
            .enumerate()
            .map(|(i, &rank)| RankedEntry {
                item: RankItem::Relation {
                    triple: RelationTriple::new(0, "near", i as NodeId + 1),
                },
                rank,
            })
            .collect(),
        votes: 0,
        tie_votes: 0,
    }
}

#[test]
fn top_ranked_takes_the_maximum_set() {
    assert_eq!(top_ranked(&list_with_ranks(&[6, 6, 2, 0])).unwrap().len(), 2);
    assert_eq!(top_ranked(&list_with_ranks(&[4, 4, 4])).unwrap().len(), 3);
    assert_eq!(top_ranked(&list_with_ranks(&[5, 3, 3])).unwrap().len(), 1);
    assert!(matches!(top_ranked(&list_with_ranks(&[])), Err(Error::Empty(_))));
}

#[test]
fn oracle_vote_table() {
    let table: Vec<[u8; 3]> = (0..3u8).map(|y| LABEL_PAIRS.map(|p| oracle_vote(p, y))).collect();
    assert_eq!(table, vec![[0, 0, 2], [1, 2, 1], [0, 2, 2]]);
}

/// Cause relations are always `underneath`; everything else is not.
fn separable_set() -> RankerTrainingSet {
    let mut scenarios = Vec::new();
    let others = ["near", "close_to", "on", "inside", "in"];
    for i in 0..60usize {
        let n_other = 1 + i % 4;
        let mut preds: Vec<&str> = (0..n_other).map(|j| others[(i + j) % others.len()]).collect();
        let causes = 1 + i % 2;
        for c in 0..causes {
            preds.insert((i + c) % (preds.len() + 1), "underneath");
        }
        let g = star(&preds);
        let cs = g
            .triples
            .iter()
            .filter(|t| t.predicate == "underneath")
            .map(|t| FailureCause::Spatial(t.clone()))
            .collect();
        scenarios.push(FailureScenario::new(g, 0, cs).unwrap());
    }
    build_training_pairs(&scenarios).unwrap()
}

#[test]
fn separable_preferences_are_learned_exactly() {
    let set = separable_set();
    let data = classifier_dataset(&set.pairs, (0, 1));
    let acc = forest::cross_validate(&data, &ForestParams::default(), 5, 1).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn mirrored_pairs_keep_cross_validated_accuracy() {
    let set = separable_set();
    let swapped = RankerTrainingSet {
        pairs: mirrored(&set).pairs.split_off(set.pairs.len()),
        ..set.clone()
    };
    let a = forest::cross_validate(&classifier_dataset(&set.pairs, (0, 1)), &ForestParams::default(), 5, 2).unwrap();
    let b = forest::cross_validate(&classifier_dataset(&swapped.pairs, (0, 1)), &ForestParams::default(), 5, 2).unwrap();
    assert!((a - b).abs() <= 0.02, "{a} vs {b}");
}

#[test]
fn missing_label_pair_is_named() {
    let set = separable_set();
    let only_0_and_2 = RankerTrainingSet {
        pairs: set.pairs.iter().filter(|p| p.label != PREFER_SECOND).cloned().collect(),
        ..set.clone()
    };
    assert!(matches!(
        train_ranker(&only_0_and_2, &ForestParams::default(), 0),
        Err(Error::MissingLabelPair(0, 1))
    ));
}

#[test]
fn trained_ensemble_ranks_and_round_trips() {
    let set = mirrored(&separable_set());
    let params = ForestParams {
        n_trees: 10,
        ..ForestParams::default()
    };
    let ens = train_ranker(&set, &params, 4).unwrap();
    assert_eq!(ens.classifiers.len(), 3);
    assert_eq!(train_ranker(&set, &params, 4).unwrap(), ens);

    let g = star(&["near", "underneath", "close_to", "underneath"]);
    let list = rank_object(&g, 0, &ens, PairOrder::Ordered).unwrap();
    let top: Vec<String> = top_ranked(&list)
        .unwrap()
        .iter()
        .map(|i| i.relation().unwrap().predicate.clone())
        .collect();
    assert_eq!(top, vec!["underneath", "underneath"]);

    let text = ens.to_json().unwrap();
    let back = RankerEnsemble::from_json(&text).unwrap();
    assert_eq!(back, ens);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn ensemble_rejects_foreign_vocabularies() {
    let ens = train_ranker(
        &mirrored(&separable_set()),
        &ForestParams {
            n_trees: 3,
            ..ForestParams::default()
        },
        0,
    )
    .unwrap();
    let g = star(&["near", "underneath"]);
    let (p, _) = vocab();
    let a = AttributeVocabulary::new(["none", "fragile"]).unwrap();
    let c = candidates(&g, 0, &p, &a).unwrap();
    assert!(matches!(pairwise_rank(&c, &ens, PairOrder::Ordered), Err(Error::VocabularyMismatch(_))));
}

fn order_from(mut keys: Vec<(u64, usize)>) -> Vec<usize> {
    keys.sort();
    keys.into_iter().map(|(_, i)| i).collect()
}

proptest! {
    #[test]
    fn oracle_ranks_match_closed_form(is_cause in prop::collection::vec(any::<bool>(), 1..=10), ordered in any::<bool>()) {
        let order = if ordered { PairOrder::Ordered } else { PairOrder::Unordered };
        let (_, c) = star_candidates(is_cause.len());
        let causes = causes_for(&c, &is_cause);
        let list = pairwise_rank(&c, &OracleVoter { causes: &causes }, order).unwrap();

        let want: Vec<u32> = (0..c.len()).map(|i| closed_form_rank(&is_cause, i, order)).collect();
        let mut expected: Vec<usize> = (0..c.len()).collect();
        expected.sort_by_key(|&i| (Reverse(want[i]), c[i].key));
        let got: Vec<(RankItem, u32)> = list.entries.iter().map(|e| (e.item.clone(), e.rank)).collect();
        let exp: Vec<(RankItem, u32)> = expected.iter().map(|&i| (c[i].item.clone(), want[i])).collect();
        prop_assert_eq!(got, exp);
    }

    #[test]
    fn increments_equal_votes_plus_ties(is_cause in prop::collection::vec(any::<bool>(), 1..=8), ordered in any::<bool>()) {
        let order = if ordered { PairOrder::Ordered } else { PairOrder::Unordered };
        let (_, c) = star_candidates(is_cause.len());
        let causes = causes_for(&c, &is_cause);
        let list = pairwise_rank(&c, &OracleVoter { causes: &causes }, order).unwrap();
        let total: u32 = list.entries.iter().map(|e| e.rank).sum();
        prop_assert_eq!(total as usize, list.votes + list.tie_votes);
        let top = top_ranked(&list).unwrap();
        prop_assert!(!top.is_empty());
        prop_assert!(list.entries[..top.len()].iter().all(|e| e.rank == list.entries[0].rank));
    }

    #[test]
    fn permuting_candidates_keeps_the_top_set(
        is_cause in prop::collection::vec(any::<bool>(), 1..=8),
        shuffle in prop::collection::vec(any::<u64>(), 8),
    ) {
        let (_, c) = star_candidates(is_cause.len());
        let causes = causes_for(&c, &is_cause);
        let perm = order_from(shuffle.iter().take(c.len()).copied().zip(0..c.len()).collect());
        let permuted: Vec<Candidate> = perm.iter().map(|&i| c[i].clone()).collect();
        let voter = OracleVoter { causes: &causes };
        let a: HashSet<RankItem> = top_ranked(&pairwise_rank(&c, &voter, PairOrder::Ordered).unwrap()).unwrap().into_iter().collect();
        let b: HashSet<RankItem> = top_ranked(&pairwise_rank(&permuted, &voter, PairOrder::Ordered).unwrap()).unwrap().into_iter().collect();
        prop_assert_eq!(a, b);
    }
}
