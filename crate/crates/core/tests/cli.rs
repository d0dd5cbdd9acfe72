use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pickwhy::forest::ForestParams;
use pickwhy::ranking;
use pickwhy::scene::{
    save_scene, AttributeVocabulary, BoundingBox2D, FailureCause, FailureScenario, PredicateVocabulary,
    RelationTriple, Scene, SceneGraph, SceneNode,
};
use pickwhy::synth::{self, GeneratorConfig};

fn pickwhy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickwhy"))
        .current_dir(dir)
        .env_remove("PICKWHY_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn node(id: u32, label: &str) -> SceneNode {
    SceneNode {
        id,
        bbox: BoundingBox2D::new(30.0 * id as f64, 5.0, 20.0, 10.0).unwrap(),
        label: label.into(),
        attribute: "none".into(),
    }
}

fn card_scenario() -> FailureScenario {
    let g = SceneGraph::new(
        PredicateVocabulary::default(),
        AttributeVocabulary::default(),
        vec![node(0, "credit card"), node(1, "newspaper"), node(2, "mug")],
        vec![RelationTriple::new(0, "underneath", 1), RelationTriple::new(0, "near", 2)],
    );
    FailureScenario::new(g, 0, vec![FailureCause::Spatial(RelationTriple::new(0, "underneath", 1))]).unwrap()
}

fn write_card(dir: &Path) {
    save_scene(&Scene::from_scenario(card_scenario()), &dir.join("card.json")).unwrap();
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.json", "b.json"] {
        let o = pickwhy(dir.path(), &["gen", "--n", "12", "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    pickwhy(dir.path(), &["gen", "--n", "6", "--seed", "3", "--out", "flag.json"]);
    let o = Command::new(env!("CARGO_BIN_EXE_pickwhy"))
        .current_dir(dir.path())
        .env("PICKWHY_SEED", "3")
        .args(["gen", "--n", "6", "--out", "env.json"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("flag.json")).unwrap(),
        fs::read(dir.path().join("env.json")).unwrap()
    );
}

#[test]
fn explain_card_scene_with_oracle_trained_ranker() {
    let dir = tempfile::tempdir().unwrap();
    write_card(dir.path());
    let corpus = synth::build_corpus(&GeneratorConfig::default(), 200, 3).unwrap();
    let set = ranking::mirrored(&ranking::build_training_pairs(corpus.scenarios()).unwrap());
    let ensemble = ranking::train_ranker(&set, &ForestParams::default(), 3).unwrap();
    ensemble.save(&dir.path().join("r.json")).unwrap();
    let o = pickwhy(dir.path(), &["explain", "--scene", "card.json", "--variant", "ssg-r", "--ranker", "r.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "The robot could not pick up the credit card because the credit card is underneath the newspaper.\n"
    );
}

#[test]
fn explain_variants_on_card_scene() {
    let dir = tempfile::tempdir().unwrap();
    write_card(dir.path());
    let run = |variant: &str| stdout(&pickwhy(dir.path(), &["explain", "--scene", "card.json", "--variant", variant, "--oracle-ranker"]));
    assert_eq!(
        run("ssg"),
        "The robot could not pick up the credit card because the credit card is underneath the newspaper and the credit card is near the mug.\n"
    );
    assert_eq!(
        run("ssg-r"),
        "The robot could not pick up the credit card because the credit card is underneath the newspaper.\n"
    );
    assert_eq!(run("cb"), "The robot could not pick up the credit card because the credit card is occluded.\n");
    assert_eq!(run("none"), "\n");
}

#[test]
fn explain_json_carries_supporting_relations() {
    let dir = tempfile::tempdir().unwrap();
    write_card(dir.path());
    let o = pickwhy(dir.path(), &["explain", "--scene", "card.json", "--oracle-ranker", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["variant"], "ssg_r");
    assert_eq!(v["supporting_relations"], serde_json::json!([{"subject": 0, "predicate": "underneath", "object": 1}]));
}

#[test]
fn graph_dot_has_one_edge_per_triple() {
    let dir = tempfile::tempdir().unwrap();
    pickwhy(dir.path(), &["gen", "--n", "5", "--seed", "2", "--out", "c.json"]);
    let corpus = synth::load_corpus(&dir.path().join("c.json")).unwrap();
    for i in 0..corpus.scenes.len() {
        let g = &corpus.scenes[i].scenario.graph;
        let o = pickwhy(dir.path(), &["graph", "--corpus", "c.json", "--index", &i.to_string(), "--dot"]);
        let text = stdout(&o);
        assert!(text.starts_with("digraph scene {\n") && text.ends_with("}\n"));
        let edges: Vec<&str> = text.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(edges.len(), g.triples.len());
        for (line, t) in edges.iter().zip(&g.triples) {
            assert_eq!(*line, format!("  n{} -> n{} [label=\"{}\"];", t.subject, t.object, t.predicate));
        }
        assert_eq!(text.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count(), g.nodes.len());
    }
}

#[test]
fn rank_lists_cause_first() {
    let dir = tempfile::tempdir().unwrap();
    write_card(dir.path());
    let o = pickwhy(dir.path(), &["rank", "--scene", "card.json", "--oracle-ranker"]);
    assert_eq!(
        stdout(&o),
        "6\tthe credit card is underneath the newspaper\n2\tthe credit card is near the mug\n"
    );
    let o = pickwhy(dir.path(), &["rank", "--scene", "card.json", "--oracle-ranker", "--order", "unordered"]);
    assert!(stdout(&o).starts_with("3\t"));
}

#[test]
fn eval_writes_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    pickwhy(dir.path(), &["gen", "--n", "30", "--seed", "1", "--out", "c.json"]);
    let o = pickwhy(dir.path(), &["eval", "--corpus", "c.json", "--oracle-ranker", "--out", "r.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("condition,failure_type,metric,mean,n\n"));
    assert!(csv.contains("ssg_r,all,fid,1,"));
}

#[test]
fn missing_ranker_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    pickwhy(dir.path(), &["gen", "--n", "6", "--seed", "1", "--out", "c.json"]);
    let o = pickwhy(dir.path(), &["eval", "--corpus", "c.json", "--conditions", "ssg,ssg-r"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: precondition: "), "{}", stderr(&o));
}

#[test]
fn unknown_policy_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    pickwhy(dir.path(), &["gen", "--n", "6", "--seed", "1", "--out", "c.json"]);
    let o = pickwhy(dir.path(), &["eval", "--corpus", "c.json", "--conditions", "none", "--policy", "crowd"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: unknown-policy: "));
}

#[test]
fn missing_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = pickwhy(dir.path(), &["graph", "--scene", "absent.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error: io: ") && err.lines().count() == 1, "{err}");
}

#[test]
fn version_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write_card(dir.path());
    let text = fs::read_to_string(dir.path().join("card.json")).unwrap();
    fs::write(dir.path().join("old.json"), text.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap();
    let o = pickwhy(dir.path(), &["graph", "--scene", "old.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: format-version: "));
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"generator": {"colour": 1}}"#).unwrap();
    let o = pickwhy(dir.path(), &["--config", "cfg.json", "gen", "--n", "3", "--out", "c.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    assert!(!dir.path().join("c.json").exists());
}

#[test]
fn usage_errors_are_one_line() {
    let o = pickwhy(Path::new("."), &["explain", "--variant"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: usage: ") && stderr(&o).lines().count() == 1);
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 8] = [
        ("gen", &["--n", "--out", "--seed", "--config"]),
        ("graph", &["--scene", "--corpus", "--index", "--object", "--dot", "--model"]),
        ("train-predicates", &["--corpus", "--out"]),
        ("eval-predicates", &["--corpus", "--model", "--all-pairs", "--confusion-out"]),
        ("train-ranker", &["--corpus", "--out", "--cv"]),
        ("rank", &["--scene", "--object", "--ranker", "--oracle-ranker", "--order", "--json"]),
        ("explain", &["--scene", "--object", "--variant", "--ranker", "--oracle-ranker", "--order", "--json"]),
        ("eval", &["--corpus", "--conditions", "--ranker", "--oracle-ranker", "--policy", "--out", "--json-out"]),
    ];
    for (cmd, flags) in cases {
        let o = pickwhy(Path::new("."), &[cmd, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
