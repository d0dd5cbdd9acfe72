//! Failure identification (FId) and solution identification (SId) scoring.
//!
//! A responder reads an explanation and selects the causes it believes made
//! the pick fail plus the actions that would fix them. Compound spatial
//! failures are scored with recall, every other failure type with F1.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{self, render_attribute, render_relation, Explanation, PhraseLexicon, Variant};
use crate::ranking::{OracleVoter, PairOrder, RankItem, RankerEnsemble};
use crate::scene::{triples_containing, FailureCause, FailureScenario, FailureType, NodeId, NO_ATTRIBUTE};
use crate::synth::{Corpus, Split};
use crate::{fileio, seed, FORMAT_VERSION};

fn check_truth<T>(truth: &HashSet<T>) -> Result<()> {
    if truth.is_empty() {
        Err(Error::Empty("truth set"))
    } else {
        Ok(())
    }
}

/// Fraction of `truth` present in `selected`.
pub fn recall<T: Eq + Hash>(selected: &HashSet<T>, truth: &HashSet<T>) -> Result<f64> {
    check_truth(truth)?;
    Ok(selected.intersection(truth).count() as f64 / truth.len() as f64)
}

/// Harmonic mean of precision and recall; 0 for an empty selection.
pub fn f1<T: Eq + Hash>(selected: &HashSet<T>, truth: &HashSet<T>) -> Result<f64> {
    check_truth(truth)?;
    let tp = selected.intersection(truth).count() as f64;
    if tp == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / (selected.len() as f64 + truth.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1,
    Recall,
}

impl Metric {
    /// Recall for compound spatial failures, F1 otherwise.
    pub fn for_type(failure_type: FailureType) -> Metric {
        match failure_type {
            FailureType::CompoundSpatial => Metric::Recall,
            _ => Metric::F1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Recall => "recall",
        }
    }

    pub fn score<T: Eq + Hash>(&self, selected: &HashSet<T>, truth: &HashSet<T>) -> Result<f64> {
        match self {
            Metric::F1 => f1(selected, truth),
            Metric::Recall => recall(selected, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum SolutionAction {
    RemoveOccluder(NodeId),
    OpenContainer(NodeId),
    HandleWithCare,
    GetHelpForHeavy,
    WaitToCool,
    NoneNeeded,
}

impl fmt::Display for SolutionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolutionAction::RemoveOccluder(id) => write!(f, "remove_occluder({id})"),
            SolutionAction::OpenContainer(id) => write!(f, "open_container({id})"),
            SolutionAction::HandleWithCare => f.write_str("handle_with_care"),
            SolutionAction::GetHelpForHeavy => f.write_str("get_help_for_heavy"),
            SolutionAction::WaitToCool => f.write_str("wait_to_cool"),
            SolutionAction::NoneNeeded => f.write_str("none_needed"),
        }
    }
}

/// The action that removes `cause` as an obstacle to picking `desired`.
/// Containment opens the container; any other relation moves the other object.
pub fn remedy(cause: &FailureCause, desired: NodeId) -> SolutionAction {
    match cause {
        FailureCause::Spatial(t) => {
            let other = t.other(desired).unwrap_or(t.object);
            match t.predicate.as_str() {
                "in" | "inside" => SolutionAction::OpenContainer(other),
                _ => SolutionAction::RemoveOccluder(other),
            }
        }
        FailureCause::Attribute { attribute, .. } => match attribute.as_str() {
            "fragile" => SolutionAction::HandleWithCare,
            "heavy" => SolutionAction::GetHelpForHeavy,
            "hot" => SolutionAction::WaitToCool,
            _ => SolutionAction::NoneNeeded,
        },
    }
}

pub fn ground_truth_solutions(scenario: &FailureScenario) -> BTreeSet<SolutionAction> {
    scenario
        .causes
        .iter()
        .map(|c| remedy(c, scenario.desired_object))
        .collect()
}

/// How a simulated responder turns an explanation into selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponderPolicy {
    /// Selects exactly the explanation's supporting relations and attribute.
    #[default]
    Oracle,
    /// Ignores the explanation and picks `k` of the desired object's candidate
    /// relations and attribute at random.
    RandomK(usize),
    /// Selects every candidate whose rendered phrase occurs in the text.
    LiteralTextParser,
}

impl FromStr for ResponderPolicy {
    type Err = Error;

    /// `oracle`, `random-k` (k = 1), `random-k=<k>` or `literal-text-parser`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ResponderPolicy::Oracle),
            "random-k" => Ok(ResponderPolicy::RandomK(1)),
            "literal-text-parser" => Ok(ResponderPolicy::LiteralTextParser),
            _ => s
                .strip_prefix("random-k=")
                .and_then(|k| k.parse().ok())
                .map(ResponderPolicy::RandomK)
                .ok_or_else(|| Error::UnknownPolicy(s.to_string())),
        }
    }
}

impl fmt::Display for ResponderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponderPolicy::Oracle => f.write_str("oracle"),
            ResponderPolicy::RandomK(k) => write!(f, "random-k={k}"),
            ResponderPolicy::LiteralTextParser => f.write_str("literal-text-parser"),
        }
    }
}

/// What a responder selected for one scenario. `scenario` indexes the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseRecord {
    pub scenario: usize,
    pub selected_causes: HashSet<FailureCause>,
    pub selected_solutions: BTreeSet<SolutionAction>,
}

fn item_cause(item: RankItem) -> FailureCause {
    match item {
        RankItem::Relation { triple } => FailureCause::Spatial(triple),
        RankItem::Attribute { node, attribute } => FailureCause::Attribute { node, attribute },
    }
}

/// The desired object's relations in graph order, then its attribute.
fn options(scenario: &FailureScenario) -> Vec<RankItem> {
    let mut items: Vec<RankItem> = scenario
        .subgraph()
        .into_iter()
        .map(|triple| RankItem::Relation { triple })
        .collect();
    let node = scenario.desired_node();
    if node.attribute != NO_ATTRIBUTE {
        items.push(RankItem::Attribute {
            node: node.id,
            attribute: node.attribute.clone(),
        });
    }
    items
}

/// True when `phrase` occurs in `text` as a whole clause.
fn mentions(text: &str, phrase: &str) -> bool {
    text.match_indices(phrase).any(|(i, _)| {
        let rest = &text[i + phrase.len()..];
        rest.starts_with(',') || rest.starts_with('.') || rest.starts_with(" and ")
    })
}

pub fn simulate_responder(
    scenario_index: usize,
    scenario: &FailureScenario,
    explanation: &Explanation,
    policy: ResponderPolicy,
    lexicon: &PhraseLexicon,
    seed: u64,
) -> Result<ResponseRecord> {
    let desired = scenario.desired_object;
    let items: Vec<RankItem> = match policy {
        ResponderPolicy::Oracle => {
            let mut items: Vec<RankItem> = explanation
                .supporting_relations
                .iter()
                .map(|t| RankItem::Relation { triple: t.clone() })
                .collect();
            if let Some(a) = &explanation.supporting_attribute {
                items.push(RankItem::Attribute {
                    node: desired,
                    attribute: a.clone(),
                });
            }
            items
        }
        ResponderPolicy::RandomK(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let all = options(scenario);
            all.choose_multiple(&mut rng, k.min(all.len())).cloned().collect()
        }
        ResponderPolicy::LiteralTextParser => {
            let graph = &scenario.graph;
            let text = explanation.text.to_lowercase();
            let mut items = Vec::new();
            for triple in triples_containing(graph, desired)? {
                if mentions(&text, &render_relation(&triple, lexicon, graph)?) {
                    items.push(RankItem::Relation { triple });
                }
            }
            let node = scenario.desired_node();
            if node.attribute != NO_ATTRIBUTE && mentions(&text, &render_attribute(node, lexicon)?) {
                items.push(RankItem::Attribute {
                    node: desired,
                    attribute: node.attribute.clone(),
                });
            }
            items
        }
    };
    let selected_causes: HashSet<FailureCause> = items.into_iter().map(item_cause).collect();
    let selected_solutions = selected_causes.iter().map(|c| remedy(c, desired)).collect();
    Ok(ResponseRecord {
        scenario: scenario_index,
        selected_causes,
        selected_solutions,
    })
}

/// FId and SId of one response, each with the scenario's metric.
pub fn score_response(scenario: &FailureScenario, response: &ResponseRecord) -> Result<(f64, f64)> {
    let metric = Metric::for_type(scenario.failure_type);
    let causes: HashSet<FailureCause> = scenario.causes.iter().cloned().collect();
    let solutions: HashSet<SolutionAction> = ground_truth_solutions(scenario).into_iter().collect();
    let picked: HashSet<SolutionAction> = response.selected_solutions.iter().cloned().collect();
    Ok((
        metric.score(&response.selected_causes, &causes)?,
        metric.score(&picked, &solutions)?,
    ))
}

/// Source of pairwise votes for the ranked variant.
#[derive(Debug, Clone, Copy)]
pub enum RankerChoice<'a> {
    /// Votes from each scenario's ground-truth causes.
    Oracle,
    Trained(&'a RankerEnsemble),
}

/// Renders the explanation `variant` for `scenario`. The ranked variant needs a ranker.
pub fn explain_scenario(
    scenario: &FailureScenario,
    variant: Variant,
    ranker: Option<RankerChoice<'_>>,
    order: PairOrder,
    lexicon: &PhraseLexicon,
) -> Result<Explanation> {
    let (graph, desired) = (&scenario.graph, scenario.desired_object);
    match variant {
        Variant::None => Ok(explain::generate_none(scenario)),
        Variant::Cb => Ok(explain::generate_cb(scenario)),
        Variant::Ssg => explain::generate_ssg(graph, desired, lexicon),
        Variant::SsgR => match ranker {
            None => Err(Error::Precondition("the ssg_r condition needs a ranker".into())),
            Some(RankerChoice::Oracle) => explain::generate_ssg_r(
                graph,
                desired,
                &OracleVoter {
                    causes: &scenario.causes,
                },
                order,
                lexicon,
            ),
            Some(RankerChoice::Trained(ensemble)) => explain::generate_ssg_r(graph, desired, ensemble, order, lexicon),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub policy: ResponderPolicy,
    pub order: PairOrder,
    pub lexicon: PhraseLexicon,
    pub split: Split,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            policy: ResponderPolicy::Oracle,
            order: PairOrder::Ordered,
            lexicon: PhraseLexicon::default(),
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario: usize,
    pub condition: Variant,
    pub failure_type: FailureType,
    pub metric: Metric,
    pub fid: f64,
    pub sid: f64,
}

/// One aggregate. Rows for a single failure type name their metric
/// (`fid_f1`, `sid_recall`, ...); rows over all types (`failure_type` =
/// `all`) average each scenario's own metric and are named `fid` and `sid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: Variant,
    pub failure_type: String,
    pub metric: String,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub format_version: u32,
    pub policy: String,
    pub rows: Vec<ReportRow>,
    pub scenarios: Vec<ScenarioScore>,
}

pub const ALL_TYPES: &str = "all";

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl ScoreReport {
    fn build(conditions: &[Variant], policy: ResponderPolicy, scenarios: Vec<ScenarioScore>) -> Self {
        let mut rows = Vec::new();
        for &condition in conditions {
            let of: Vec<&ScenarioScore> = scenarios.iter().filter(|s| s.condition == condition).collect();
            let mut push = |failure_type: &str, prefix: &str, subset: &[&ScenarioScore]| {
                if subset.is_empty() {
                    return;
                }
                let fid: Vec<f64> = subset.iter().map(|s| s.fid).collect();
                let sid: Vec<f64> = subset.iter().map(|s| s.sid).collect();
                for (name, xs) in [("fid", fid), ("sid", sid)] {
                    rows.push(ReportRow {
                        condition,
                        failure_type: failure_type.to_string(),
                        metric: format!("{name}{prefix}"),
                        mean: mean(&xs),
                        n: xs.len(),
                    });
                }
            };
            push(ALL_TYPES, "", &of);
            for ft in FailureType::ALL {
                let subset: Vec<&ScenarioScore> = of.iter().copied().filter(|s| s.failure_type == ft).collect();
                push(ft.as_str(), &format!("_{}", Metric::for_type(ft).as_str()), &subset);
            }
        }
        ScoreReport {
            format_version: FORMAT_VERSION,
            policy: policy.to_string(),
            rows,
            scenarios,
        }
    }

    /// The aggregate row for `condition`, `failure_type` (`None` for all
    /// types) and `measure` (`fid` or `sid`).
    pub fn mean(&self, condition: Variant, failure_type: Option<FailureType>, measure: &str) -> Option<f64> {
        let ft = failure_type.map_or(ALL_TYPES, |t| t.as_str());
        let metric = match failure_type {
            None => measure.to_string(),
            Some(t) => format!("{measure}_{}", Metric::for_type(t).as_str()),
        };
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.failure_type == ft && r.metric == metric)
            .map(|r| r.mean)
    }

    /// Columns `condition,failure_type,metric,mean,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,failure_type,metric,mean,n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.condition, r.failure_type, r.metric, r.mean, r.n);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        fileio::from_versioned_json(text)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fileio::write_string(path, &self.to_csv())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fileio::write_string(path, &self.to_json()?)
    }

    /// Mean FId per condition over all failure types.
    pub fn fid_by_condition(&self) -> BTreeMap<Variant, f64> {
        self.rows
            .iter()
            .filter(|r| r.failure_type == ALL_TYPES && r.metric == "fid")
            .map(|r| (r.condition, r.mean))
            .collect()
    }
}

/// Explains and scores every scene of the chosen split under each condition.
/// Scenario `i` under condition `c` responds with seed `derive(derive(seed, c), i)`.
pub fn run_experiment(
    corpus: &Corpus,
    conditions: &[Variant],
    ranker: Option<RankerChoice<'_>>,
    seed: u64,
    options: &ExperimentOptions,
) -> Result<ScoreReport> {
    if conditions.is_empty() {
        return Err(Error::Empty("conditions"));
    }
    if conditions.contains(&Variant::SsgR) && ranker.is_none() {
        return Err(Error::Precondition("the ssg_r condition needs a ranker".into()));
    }
    let scenes: Vec<(usize, &FailureScenario)> = corpus
        .scenes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == options.split)
        .map(|(i, s)| (i, &s.scenario))
        .collect();
    if scenes.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let jobs: Vec<(usize, Variant, usize, &FailureScenario)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(ci, &c)| scenes.iter().map(move |&(i, s)| (ci, c, i, s)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(ci, condition, i, scenario)| {
            let explanation = explain_scenario(scenario, condition, ranker, options.order, &options.lexicon)?;
            let s = seed::derive(seed::derive(seed, ci as u64), i as u64);
            let response = simulate_responder(i, scenario, &explanation, options.policy, &options.lexicon, s)?;
            let (fid, sid) = score_response(scenario, &response)?;
            Ok(ScenarioScore {
                scenario: i,
                condition,
                failure_type: scenario.failure_type,
                metric: Metric::for_type(scenario.failure_type),
                fid,
                sid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreReport::build(conditions, options.policy, scores))
}
