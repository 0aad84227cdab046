use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_embedpoison"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["generate-sbm", "--blocks", "4", "--block-size", "12", "--p-in", "0.45", "--p-out", "0.03", "--seed", "3", "--out", "g.edges"],
        dir.path(),
    );
    ok(&["split", "--graph", "g.edges", "--holdout", "0.15", "--seed", "1", "--out", "split.json"], dir.path());
    dir
}

fn edge_count(dir: &Path) -> usize {
    std::fs::read_to_string(dir.join("g.edges"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
}

#[test]
fn split_holds_out_the_rounded_fraction_and_is_byte_identical() {
    let dir = setup();
    let p = dir.path();
    let v = json(&p.join("split.json"));
    let held = v["test_pos"].as_array().unwrap().len() + v["val_pos"].as_array().unwrap().len();
    assert_eq!(held, (0.15 * edge_count(p) as f64).round() as usize);
    ok(&["split", "--graph", "g.edges", "--holdout", "0.15", "--seed", "1", "--out", "again.json"], p);
    assert_eq!(
        std::fs::read(p.join("split.json")).unwrap(),
        std::fs::read(p.join("again.json")).unwrap()
    );
}

#[test]
fn invalid_holdout_is_a_usage_error() {
    let dir = setup();
    let out = run(&["split", "--graph", "g.edges", "--holdout", "1.5", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn missing_graph_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["split", "--graph", "nope.edges", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn availability_attack_returns_exactly_budget_edits() {
    let dir = setup();
    let p = dir.path();
    ok(
        &[
            "attack", "--graph", "g.edges", "--split", "split.json", "--method", "deepwalk", "--window", "3", "--dim", "4",
            "--ridge", "1", "--goal", "availability", "--action", "add", "--budget", "12", "--iters", "4", "--step", "0.01",
            "--out", "opt.json",
        ],
        p,
    );
    let v = json(&p.join("opt.json"));
    assert_eq!(v["perturbation"].as_array().unwrap().len(), 12);
    assert_eq!(v["loss_trace"].as_array().unwrap().len(), 4);
    assert_eq!(v["config"]["proximity"]["dim"], 4);
    assert_eq!(v["spec"]["iterations"], 4);
}

#[test]
fn direct_integrity_edits_touch_the_target() {
    let dir = setup();
    let p = dir.path();
    ok(
        &[
            "attack", "--graph", "g.edges", "--goal", "integrity", "--target", "0,30", "--direction", "up", "--constraint",
            "direct", "--action", "add", "--budget", "5", "--dim", "4", "--iters", "3", "--out", "int.json",
        ],
        p,
    );
    let v = json(&p.join("int.json"));
    let labels = v["perturbation_labels"].as_array().unwrap();
    assert_eq!(labels.len(), 5);
    for pair in labels {
        let (a, b) = (pair[0].as_str().unwrap(), pair[1].as_str().unwrap());
        assert!(["0", "30"].contains(&a) || ["0", "30"].contains(&b), "{a}-{b}");
    }
}

#[test]
fn ppr_baseline_alternates_target_endpoints() {
    let dir = setup();
    let p = dir.path();
    ok(
        &[
            "attack", "--graph", "g.edges", "--goal", "integrity", "--target", "0,30", "--constraint", "direct", "--action",
            "add", "--budget", "4", "--attack", "ppr", "--out", "ppr.json",
        ],
        p,
    );
    let v = json(&p.join("ppr.json"));
    let edits: Vec<(String, String)> = v["perturbation_labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e[0].as_str().unwrap().to_string(), e[1].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(edits.len(), 4);
    for e in &edits {
        assert!(e.0 == "0" || e.1 == "0" || e.0 == "30" || e.1 == "30");
    }
}

#[test]
fn infeasible_budget_exits_three_and_reports_maximum() {
    let dir = setup();
    let out = run(
        &[
            "attack", "--graph", "g.edges", "--goal", "integrity", "--target", "0,30", "--constraint", "direct", "--action",
            "add", "--budget", "500", "--attack", "random", "--out", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at most"));
}

#[test]
fn evaluate_clean_and_force_overwrite() {
    let dir = setup();
    let p = dir.path();
    let args = ["evaluate", "--graph", "g.edges", "--split", "split.json", "--dim", "4", "--ridge", "1", "--out", "ev"];
    ok(&args, p);
    let v = json(&p.join("ev/report.json"));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["metric_curve"][0], reports[0]["baseline_clean"]);
    let first = std::fs::read(p.join("ev/report.json")).unwrap();

    assert_eq!(run(&args, p).status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced, p);
    assert_eq!(first, std::fs::read(p.join("ev/report.json")).unwrap());
}

#[test]
fn evaluate_perturbation_over_budget_grid() {
    let dir = setup();
    let p = dir.path();
    ok(
        &[
            "attack", "--graph", "g.edges", "--split", "split.json", "--goal", "availability", "--action", "add",
            "--budget", "9", "--attack", "random", "--out", "rand.json",
        ],
        p,
    );
    ok(
        &[
            "evaluate", "--graph", "g.edges", "--split", "split.json", "--perturbation", "rand.json", "--budgets", "0,3,6,9",
            "--dim", "4", "--ridge", "1", "--out", "ev",
        ],
        p,
    );
    let v = json(&p.join("ev/report.json"));
    let r = &v["reports"][0];
    assert_eq!(r["metric_curve"].as_array().unwrap().len(), 4);
    assert_eq!(r["metric_curve"][0], r["baseline_clean"]);
    let csv = std::fs::read_to_string(p.join("ev/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn experiment_from_toml_with_flag_overrides() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(
        p.join("run.toml"),
        r#"
graph = "g.edges"
kind = "availability"
attacks = ["opt", "random", "degree_sum"]
action = "add"
out = "from_config"

[experiment]
budgets = [0, 4]
seeds = [1, 2]

[experiment.proximity]
method = "line2"
dim = 4

[experiment.als]
ridge = 1.0

[experiment.pgd]
iterations = 3
step_size = 0.01
"#,
    )
    .unwrap();
    ok(&["experiment", "--config", "run.toml", "--dim", "3", "--out", "exp"], p);
    assert!(!p.join("from_config").exists());
    let v = json(&p.join("exp/report.json"));
    assert_eq!(v["config"]["experiment"]["proximity"]["dim"], 3);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert_eq!(r["per_seed"][0].as_array().unwrap().len(), 2);
        assert_eq!(r["metric_curve"][0], r["baseline_clean"]);
    }
    let csv = std::fs::read_to_string(p.join("exp/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn experiment_rejects_unknown_keys_and_bad_baselines() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("bad.toml"), "graph = \"g.edges\"\nkind = \"availability\"\nbudget = 3\nout = \"x\"\n").unwrap();
    assert_eq!(run(&["experiment", "--config", "bad.toml"], p).status.code(), Some(2));
    std::fs::write(
        p.join("ppr.toml"),
        "graph = \"g.edges\"\nkind = \"availability\"\nattacks = [\"ppr\"]\nout = \"x\"\n",
    )
    .unwrap();
    assert_eq!(run(&["experiment", "--config", "ppr.toml"], p).status.code(), Some(2));
    assert!(!p.join("x").exists());
}
