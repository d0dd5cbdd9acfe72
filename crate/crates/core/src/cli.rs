//! The `pickwhy` command line.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, bad config,
//! malformed or mismatched inputs), 2 on I/O errors. Every failure prints one
//! line `error: <code>: <detail>` to standard error.
//!
//! `graph --dot` prints
//!
//! ```text
//! digraph scene {
//!   n0 [label="credit card"];
//!   n1 [label="newspaper"];
//!   n0 -> n1 [label="underneath"];
//! }
//! ```
//!
//! with one node line per node and one edge line per triple, in graph order.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{self, ExperimentOptions, RankerChoice, ResponderPolicy};
use crate::explain::{self, PhraseLexicon, Variant};
use crate::fileio;
use crate::forest::{self, ForestParams};
use crate::predicate::{self, SceneGraphModel};
use crate::ranking::{self, OracleVoter, PairOrder, RankItem, RankedRelationList, RankerEnsemble};
use crate::scene::json::{load_scene, Scene};
use crate::scene::{triples_containing, FailureScenario, NodeId, RelationTriple, SceneGraph};
use crate::synth::{self, GeneratorConfig, Split};

/// Settings file passed with `--config`. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    /// Forests of the predicate and attribute models.
    pub predicate_params: Option<ForestParams>,
    /// Forests of the ranking ensemble.
    pub ranker_params: Option<ForestParams>,
    pub lexicon: Option<PhraseLexicon>,
}

/// Default file locations, used when the matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub ranker: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Config = serde_json::from_str(&fileio::read_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        for p in [&self.predicate_params, &self.ranker_params].into_iter().flatten() {
            p.validate()?;
        }
        Ok(())
    }

    fn predicate_params(&self) -> ForestParams {
        self.predicate_params.clone().unwrap_or_else(predicate::default_predicate_params)
    }

    fn ranker_params(&self) -> ForestParams {
        self.ranker_params.clone().unwrap_or_default()
    }

    fn lexicon(&self) -> PhraseLexicon {
        self.lexicon.clone().unwrap_or_default()
    }
}

#[derive(Debug, Parser)]
#[command(name = "pickwhy", version, about = "Explain why a robot could not pick up an object")]
struct Cli {
    /// JSON settings file (seed, paths, generator and forest overrides, lexicon).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; falls back to the config seed, then 0.
    #[arg(long, global = true, env = "PICKWHY_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus of failure scenarios.
    Gen(GenArgs),
    /// List a scene graph or export it as DOT.
    Graph(GraphArgs),
    /// Train the predicate and attribute forests on the train split.
    TrainPredicates(TrainArgs),
    /// Score a predicate model on the test split.
    EvalPredicates(EvalPredicatesArgs),
    /// Train the pairwise ranking ensemble on the train split.
    TrainRanker(TrainRankerArgs),
    /// Rank the relations around an object.
    Rank(RankArgs),
    /// Render an explanation for a failed pick.
    Explain(ExplainArgs),
    /// Score simulated responders under several explanation conditions.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 188)]
    n: usize,
    /// Output corpus file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SceneSource {
    /// Scene file.
    #[arg(long, conflicts_with_all = ["corpus", "index"])]
    scene: Option<PathBuf>,
    /// Corpus file; pick a scene with `--index`.
    #[arg(long, requires = "index")]
    corpus: Option<PathBuf>,
    /// Position of the scene in the corpus.
    #[arg(long, requires = "corpus")]
    index: Option<usize>,
}

#[derive(Debug, Args)]
struct GraphArgs {
    #[command(flatten)]
    source: SceneSource,
    /// Restrict the output to the triples mentioning this node.
    #[arg(long)]
    object: Option<NodeId>,
    /// Print DOT instead of the plain listing.
    #[arg(long)]
    dot: bool,
    /// Replace the scene's triples with those predicted by this model.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalPredicatesArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Model file from `train-predicates`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also score unrelated pairs, which should be predicted as `none_rel`.
    #[arg(long)]
    all_pairs: bool,
    /// Write the confusion matrix as CSV.
    #[arg(long)]
    confusion_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainRankerArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output ranker file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Choose each classifier's depth and size by 5-fold cross-validation.
    #[arg(long)]
    cv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Ordered,
    Unordered,
}

impl From<OrderArg> for PairOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Ordered => PairOrder::Ordered,
            OrderArg::Unordered => PairOrder::Unordered,
        }
    }
}

#[derive(Debug, Args)]
struct RankerSource {
    /// Ranker file from `train-ranker`.
    #[arg(long, conflicts_with = "oracle_ranker")]
    ranker: Option<PathBuf>,
    /// Vote from the scene's recorded failure causes instead of a trained ranker.
    #[arg(long)]
    oracle_ranker: bool,
    /// Which candidate pairs the classifiers see.
    #[arg(long, value_enum, default_value_t = OrderArg::Ordered)]
    order: OrderArg,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    source: SceneSource,
    /// Node to rank around; defaults to the scene's failed object.
    #[arg(long)]
    object: Option<NodeId>,
    #[command(flatten)]
    ranker: RankerSource,
    /// Print JSON instead of one `rank<TAB>phrase` line per candidate.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    source: SceneSource,
    /// Node to explain; defaults to the scene's failed object.
    #[arg(long)]
    object: Option<NodeId>,
    /// none, cb, ssg or ssg-r.
    #[arg(long, default_value = "ssg-r")]
    variant: String,
    #[command(flatten)]
    ranker: RankerSource,
    /// Print the explanation as JSON with its supporting relations.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Corpus file; its test split is scored.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated conditions.
    #[arg(long, default_value = "none,cb,ssg,ssg-r", value_delimiter = ',')]
    conditions: Vec<String>,
    #[command(flatten)]
    ranker: RankerSource,
    /// oracle, random-k, random-k=<k> or literal-text-parser.
    #[arg(long, default_value = "oracle")]
    policy: String,
    /// Report CSV; printed to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report, with per-scenario scores, as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let detail = e.kind().as_str().unwrap_or("invalid arguments").to_string();
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {detail}: {first}");
            return 1;
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {detail}", e.code());
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Precondition(format!("missing --{name} (and no default in the config paths)")))
}

fn run(cli: Cli) -> Result<String> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let paths = &config.paths;
    match cli.command {
        Command::Gen(a) => {
            let out = required(a.out, &paths.corpus, "out")?;
            let corpus = synth::build_corpus(&config.generator, a.n, seed)?;
            synth::save_corpus(&corpus, &out)?;
            let [train, val, test] = [Split::Train, Split::Validation, Split::Test].map(|s| corpus.split(s).count());
            Ok(format!(
                "wrote {} scenes ({train} train, {val} validation, {test} test) to {}\n",
                corpus.scenes.len(),
                out.display()
            ))
        }
        Command::Graph(a) => {
            let mut scene = load_source(&a.source)?;
            if let Some(path) = &a.model {
                let model = SceneGraphModel::load(path)?;
                scene.graph = predicate::predict_graph(&model.predicate, &scene.graph)?;
            }
            let triples = match a.object {
                Some(id) => triples_containing(&scene.graph, id)?,
                None => scene.graph.triples.clone(),
            };
            Ok(if a.dot {
                to_dot(&scene.graph, &triples, a.object)
            } else {
                listing(&scene.graph, &triples, a.object)
            })
        }
        Command::TrainPredicates(a) => {
            let corpus = synth::load_corpus(&required(a.corpus, &paths.corpus, "corpus")?)?;
            let out = required(a.out, &paths.models, "out")?;
            let model = predicate::train_scene_graph_model(corpus.split(Split::Train), &config.predicate_params(), seed)?;
            model.save(&out)?;
            Ok(format!(
                "trained on {} scenes; wrote {}\n",
                corpus.split(Split::Train).count(),
                out.display()
            ))
        }
        Command::EvalPredicates(a) => {
            let corpus = synth::load_corpus(&required(a.corpus, &paths.corpus, "corpus")?)?;
            let model = SceneGraphModel::load(&required(a.model, &paths.models, "model")?)?;
            let eval = predicate::evaluate_predicates(&model.predicate, corpus.split(Split::Test), a.all_pairs)?;
            let attr = predicate::evaluate_attributes(&model.attribute, corpus.split(Split::Test))?;
            if let Some(path) = &a.confusion_out {
                fileio::write_string(path, &eval.confusion.to_csv())?;
            }
            Ok(format!(
                "predicate_accuracy: {:.4}\nattribute_accuracy: {attr:.4}\npairs: {}\n",
                eval.accuracy,
                eval.confusion.total()
            ))
        }
        Command::TrainRanker(a) => {
            let corpus = synth::load_corpus(&required(a.corpus, &paths.corpus, "corpus")?)?;
            let out = required(a.out, &paths.ranker, "out")?;
            let set = ranking::mirrored(&ranking::build_training_pairs(corpus.split(Split::Train))?);
            let params = config.ranker_params();
            let ensemble = if a.cv {
                ranking::train_ranker_cv(&set, &forest::default_grid(&params), seed)?
            } else {
                ranking::train_ranker(&set, &params, seed)?
            };
            ensemble.save(&out)?;
            Ok(format!("trained on {} pairs; wrote {}\n", set.pairs.len(), out.display()))
        }
        Command::Rank(a) => {
            let scene = load_source(&a.source)?;
            let object = target(&scene, a.object)?;
            let lexicon = config.lexicon();
            let list = rank_scene(&scene, object, &a.ranker, &paths.ranker)?;
            if a.json {
                let mut text = serde_json::to_string_pretty(&list.entries)?;
                text.push('\n');
                return Ok(text);
            }
            let mut out = String::new();
            for e in &list.entries {
                let phrase = match &e.item {
                    RankItem::Relation { triple } => explain::render_relation(triple, &lexicon, &scene.graph)?,
                    RankItem::Attribute { node, .. } => {
                        explain::render_attribute(scene.graph.require_node(*node)?, &lexicon)?
                    }
                };
                let _ = writeln!(out, "{}\t{phrase}", e.rank);
            }
            Ok(out)
        }
        Command::Explain(a) => {
            let variant: Variant = a.variant.parse()?;
            let scene = load_source(&a.source)?;
            let object = target(&scene, a.object)?;
            let lexicon = config.lexicon();
            lexicon.check(&scene.graph)?;
            let explanation = match variant {
                Variant::Ssg => explain::generate_ssg(&scene.graph, object, &lexicon)?,
                Variant::SsgR => {
                    let order = a.ranker.order.into();
                    if a.ranker.oracle_ranker {
                        let s = scenario_for(&scene, object)?;
                        explain::generate_ssg_r(&scene.graph, object, &OracleVoter { causes: &s.causes }, order, &lexicon)?
                    } else {
                        let ensemble = RankerEnsemble::load(&required(a.ranker.ranker, &paths.ranker, "ranker")?)?;
                        explain::generate_ssg_r(&scene.graph, object, &ensemble, order, &lexicon)?
                    }
                }
                Variant::None | Variant::Cb => {
                    let s = scenario_for(&scene, object)?;
                    eval::explain_scenario(s, variant, None, PairOrder::Ordered, &lexicon)?
                }
            };
            if a.json {
                let mut text = serde_json::to_string_pretty(&explanation)?;
                text.push('\n');
                Ok(text)
            } else {
                Ok(format!("{}\n", explanation.text))
            }
        }
        Command::Eval(a) => {
            let corpus = synth::load_corpus(&required(a.corpus, &paths.corpus, "corpus")?)?;
            let conditions = a
                .conditions
                .iter()
                .map(|c| c.trim().parse::<Variant>())
                .collect::<Result<Vec<_>>>()?;
            let options = ExperimentOptions {
                policy: a.policy.parse::<ResponderPolicy>()?,
                order: a.ranker.order.into(),
                lexicon: config.lexicon(),
                split: Split::Test,
            };
            let ensemble;
            let ranker = if a.ranker.oracle_ranker {
                Some(RankerChoice::Oracle)
            } else if let Some(path) = a.ranker.ranker.clone().or_else(|| paths.ranker.clone()) {
                ensemble = RankerEnsemble::load(&path)?;
                Some(RankerChoice::Trained(&ensemble))
            } else {
                None
            };
            let report = eval::run_experiment(&corpus, &conditions, ranker, seed, &options)?;
            if let Some(path) = &a.json_out {
                report.save_json(path)?;
            }
            match a.out.or_else(|| paths.reports.clone()) {
                Some(path) => {
                    report.save_csv(&path)?;
                    Ok(format!("wrote {} rows to {}\n", report.rows.len(), path.display()))
                }
                None => Ok(report.to_csv()),
            }
        }
    }
}

fn load_source(source: &SceneSource) -> Result<Scene> {
    match (&source.scene, &source.corpus, source.index) {
        (Some(path), _, _) => load_scene(path),
        (None, Some(path), Some(i)) => {
            let corpus = synth::load_corpus(path)?;
            let n = corpus.scenes.len();
            let cs = corpus
                .scenes
                .into_iter()
                .nth(i)
                .ok_or_else(|| Error::Precondition(format!("--index {i} is out of range for a corpus of {n} scenes")))?;
            Ok(Scene::from_scenario(cs.scenario))
        }
        _ => Err(Error::Precondition("give --scene, or --corpus with --index".into())),
    }
}

fn target(scene: &Scene, object: Option<NodeId>) -> Result<NodeId> {
    let id = match (object, &scene.failure) {
        (Some(id), _) => id,
        (None, Some(f)) => f.desired_object,
        (None, None) => return Err(Error::Precondition("scene records no failure; pass --object".into())),
    };
    scene.graph.require_node(id)?;
    Ok(id)
}

/// The recorded failure, which must concern `object`.
fn scenario_for(scene: &Scene, object: NodeId) -> Result<&FailureScenario> {
    match &scene.failure {
        Some(f) if f.desired_object == object => Ok(f),
        Some(_) => Err(Error::Precondition(format!(
            "the scene's recorded failure is not about node {object}"
        ))),
        None => Err(Error::Precondition("this needs a scene with a recorded failure".into())),
    }
}

fn rank_scene(scene: &Scene, object: NodeId, source: &RankerSource, fallback: &Option<PathBuf>) -> Result<RankedRelationList> {
    let order = source.order.into();
    if source.oracle_ranker {
        let s = scenario_for(scene, object)?;
        let cands = ranking::candidates(&scene.graph, object, &scene.graph.predicates, &scene.graph.attributes)?;
        ranking::pairwise_rank(&cands, &OracleVoter { causes: &s.causes }, order)
    } else {
        let ensemble = RankerEnsemble::load(&required(source.ranker.clone(), fallback, "ranker")?)?;
        ranking::rank_object(&scene.graph, object, &ensemble, order)
    }
}

fn nodes_shown(graph: &SceneGraph, triples: &[RelationTriple], object: Option<NodeId>) -> Vec<NodeId> {
    match object {
        None => graph.nodes.iter().map(|n| n.id).collect(),
        Some(id) => graph
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|&n| n == id || triples.iter().any(|t| t.mentions(n)))
            .collect(),
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT export; see the module docs for the layout.
pub fn to_dot(graph: &SceneGraph, triples: &[RelationTriple], object: Option<NodeId>) -> String {
    let mut out = String::from("digraph scene {\n");
    for id in nodes_shown(graph, triples, object) {
        let n = graph.node(id).expect("listed from the graph");
        let _ = writeln!(out, "  n{id} [label=\"{}\"];", dot_escape(&n.label));
    }
    for t in triples {
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", t.subject, t.object, dot_escape(&t.predicate));
    }
    out.push_str("}\n");
    out
}

/// One line per node (`id<TAB>label<TAB>attribute<TAB>x,y,w,h`), a blank
/// line, then one line per triple (`subject<TAB>predicate<TAB>object`).
fn listing(graph: &SceneGraph, triples: &[RelationTriple], object: Option<NodeId>) -> String {
    let mut out = String::new();
    for id in nodes_shown(graph, triples, object) {
        let n = graph.node(id).expect("listed from the graph");
        let b = &n.bbox;
        let _ = writeln!(out, "{id}\t{}\t{}\t{},{},{},{}", n.label, n.attribute, b.x, b.y, b.w, b.h);
    }
    out.push('\n');
    for t in triples {
        let _ = writeln!(out, "{}\t{}\t{}", t.subject, t.predicate, t.object);
    }
    out
}
