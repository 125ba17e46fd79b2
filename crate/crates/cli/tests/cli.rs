use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn lgibg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgibg"))
        .args(args)
        .env_remove("LGBG_SEED")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_graph_matches_golden_dump() {
    let out = tempfile::tempdir().unwrap();
    let o = lgibg(&[
        "build-graph",
        "--log",
        s(&data("toy.jsonl")),
        "--vocab",
        s(&data("toy_vocab.json")),
        "--out",
        s(out.path()),
        "--day-origin",
        "0",
        "--span",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = fs::read(out.path().join("graphs.json")).unwrap();
    let want = fs::read(data("toy_graphs.golden.json")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn empty_log_warns_and_succeeds() {
    let out = tempfile::tempdir().unwrap();
    let log = out.path().join("empty.jsonl");
    fs::write(&log, "").unwrap();
    let dump = out.path().join("dump");
    let o = lgibg(&[
        "build-graph",
        "--log",
        s(&log),
        "--vocab",
        s(&data("toy_vocab.json")),
        "--out",
        s(&dump),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let v = read_json(&dump.join("graphs.json"));
    assert_eq!(v["samples"], Value::Array(vec![]));
}

#[test]
fn missing_vocab_exits_2_and_names_the_path() {
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("nope.json");
    let o = lgibg(&[
        "build-graph",
        "--log",
        s(&data("toy.jsonl")),
        "--vocab",
        s(&missing),
        "--out",
        s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn gradcheck_passes_and_lists_groups() {
    let o = lgibg(&["gradcheck", "--seed", "0"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("gnn.layer0.self.activity"));
    assert!(stdout.contains("temporal.query_proj"));
    assert!(stdout.contains("classifier.bias"));
    assert!(stdout.lines().last().unwrap().starts_with("PASS"));
}

#[test]
fn corrupted_gradient_fails() {
    let o = lgibg(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = lgibg(&["synth", "--spec", s(&data("spec_small.json")), "--out", s(dir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "subjects/s000.jsonl",
        "subjects/s005.jsonl",
        "labels.csv",
        "gpa.csv",
        "vocab.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    lgibg(&[
        "synth",
        "--spec",
        s(&data("spec_small.json")),
        "--seed",
        "4",
        "--out",
        s(c.path()),
    ]);
    assert_ne!(
        fs::read(a.path().join("subjects/s000.jsonl")).unwrap(),
        fs::read(c.path().join("subjects/s000.jsonl")).unwrap()
    );
}

fn synth_cohort(dir: &Path) {
    let o = lgibg(&["synth", "--spec", s(&data("spec_small.json")), "--out", s(dir)]);
    assert!(o.status.success());
}

fn train_into(cohort: &Path, out: &Path, extra: &[&str]) -> Output {
    let config = data("config_small.json");
    let mut args = vec![
        "train",
        "--data",
        s(cohort),
        "--config",
        s(&config),
        "--seed",
        "5",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    lgibg(&args)
}

#[test]
fn train_eval_inspect_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    synth_cohort(&cohort);

    let run_a = root.path().join("a");
    let run_b = root.path().join("b");
    for run in [&run_a, &run_b] {
        let o = train_into(&cohort, run, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "metrics.csv",
        "metrics.json",
        "history.csv",
        "checkpoint.json",
        "config.json",
    ] {
        assert!(run_a.join(name).exists(), "{name}");
    }
    assert_eq!(
        fs::read(run_a.join("metrics.csv")).unwrap(),
        fs::read(run_b.join("metrics.csv")).unwrap()
    );
    let metrics = read_json(&run_a.join("metrics.json"));
    assert_eq!(metrics["tasks"].as_array().unwrap().len(), 2);
    let acc = metrics["average"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let config = read_json(&run_a.join("config.json"));
    assert_eq!(config["train.seed"], 5);
    assert_eq!(config["model.layers"], 2);

    let eval_dir = root.path().join("eval");
    let o = lgibg(&[
        "eval",
        "--checkpoint",
        s(&run_a.join("checkpoint.json")),
        "--data",
        s(&cohort),
        "--splits",
        "3",
        "--out",
        s(&eval_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("average"));

    let inspect_dir = root.path().join("inspect");
    let o = lgibg(&[
        "inspect",
        "--checkpoint",
        s(&run_a.join("checkpoint.json")),
        "--data",
        s(&cohort),
        "--sample",
        "0",
        "--out",
        s(&inspect_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let att = read_json(&inspect_dir.join("attention-0.json"));
    let gamma = att["day_attention"].as_array().unwrap();
    assert_eq!(gamma.len(), 3);
    for row in gamma {
        let sum: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    for g in att["graphs"].as_array().unwrap() {
        let beta = g["node_attention"].as_array().unwrap();
        if !beta.is_empty() {
            let sum: f64 = beta.iter().map(|v| v.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    let o = lgibg(&[
        "inspect",
        "--checkpoint",
        s(&run_a.join("checkpoint.json")),
        "--data",
        s(&cohort),
        "--sample",
        "100000",
        "--out",
        s(&inspect_dir),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_day_span_gives_unit_day_attention() {
    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    synth_cohort(&cohort);
    let run = root.path().join("run");
    let o = train_into(&cohort, &run, &["--set", "data.span=1", "--set", "train.epochs=1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = root.path().join("inspect");
    let o = lgibg(&[
        "inspect",
        "--checkpoint",
        s(&run.join("checkpoint.json")),
        "--data",
        s(&cohort),
        "--sample",
        "0",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let att = read_json(&out.join("attention-0.json"));
    assert_eq!(att["day_attention"], serde_json::json!([[1.0]]));
}

#[test]
fn zero_layers_runs() {
    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    synth_cohort(&cohort);
    let o = train_into(&cohort, &root.path().join("run"), &["--layers", "0", "--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.path().join("run/metrics.csv").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    synth_cohort(&cohort);
    let o = train_into(&cohort, &root.path().join("run"), &["--set", "model.depth=3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inspect_matches_in_process_attention_exactly() {
    use lgibg::checkpoint::Checkpoint;
    use lgibg::dataset::Dataset;
    use lgibg::model::AttentionExport;

    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    synth_cohort(&cohort);
    let run = root.path().join("run");
    let o = train_into(&cohort, &run, &["--epochs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = root.path().join("inspect");
    let o = lgibg(&[
        "inspect",
        "--checkpoint",
        s(&run.join("checkpoint.json")),
        "--data",
        s(&cohort),
        "--sample",
        "4",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let exported: AttentionExport =
        serde_json::from_str(&fs::read_to_string(out.join("attention-4.json")).unwrap()).unwrap();

    let checkpoint = Checkpoint::load(&run.join("checkpoint.json")).unwrap();
    let model = checkpoint.model::<f64>().unwrap();
    let data = Dataset::load(&cohort).unwrap();
    let samples = data.samples(checkpoint.config.data.span, &model.embeddings).unwrap();
    let prepared = model.prepare(&samples[4..5]).unwrap();
    let direct = model.attention(&samples[4], &prepared[0]).unwrap();
    assert_eq!(exported, direct);
}
