use std::fs;
use std::path::Path;

use aarm::cli::run_command;
use aarm::manifest::KeyValues;
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["aarm"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn ok(args: &[&str]) {
    assert_eq!(run(args), 0, "{args:?}");
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// synth + prepare + pretrain into `dir`; returns nothing, paths are fixed.
fn setup(dir: &Path, seed: &str) {
    ok(&["synth", "--users", "40", "--items", "30", "--aspects", "12", "--seed", seed, "--out", &s(&dir.join("data.jsonl"))]);
    ok(&["prepare", "--input", &s(&dir.join("data.jsonl")), "--out", &s(&dir.join("bundle")), "--seed", seed]);
    ok(&[
        "pretrain", "--data", &s(&dir.join("bundle")), "--dim", "8", "--epochs", "1", "--min-count", "1", "--seed", seed,
        "--out", &s(&dir.join("vectors.txt")),
    ]);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    setup(d, "4");
    assert!(d.join("bundle/run.manifest").exists());
    assert!(d.join("vectors.txt.manifest").exists());
    let header = fs::read_to_string(d.join("vectors.txt")).unwrap();
    let first: Vec<&str> = header.lines().next().unwrap().split(' ').collect();
    assert_eq!(first[1], "8");

    let config = d.join("run.conf");
    fs::write(
        &config,
        format!("seed = 4\npaths.data = {}\nmodel.aspect_dim = 8\nmodel.global_dim = 8\ntrain.max_epochs = 3\ntrain.eval_every = 1\n", s(&d.join("bundle"))),
    )
    .unwrap();
    ok(&["--config", &s(&config), "train", "--embeddings", &s(&d.join("vectors.txt")), "--out", &s(&d.join("model"))]);
    for f in ["model.ckpt", "state.ckpt", "train_log.jsonl", "history.json", "run.manifest"] {
        assert!(d.join("model").join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(d.join("model/train_log.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 3);
    let manifest = KeyValues::read(&d.join("model/run.manifest")).unwrap();
    assert_eq!(manifest.get("seed"), Some("4"));
    assert!(manifest.get("config_hash").is_some() && manifest.get("version").is_some());

    ok(&["evaluate", "--data", &s(&d.join("bundle")), "--ckpt", &s(&d.join("model")), "--n", "5", "--out", &s(&d.join("report.json"))]);
    let report = json(&d.join("report.json"));
    assert_eq!(report["n"], 5);
    for m in ["recall", "precision", "ndcg", "hit_ratio"] {
        let v = report["metrics"][m].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&v));
        assert_eq!((v * 1000.0).round() / 1000.0, v);
    }
    assert!(d.join("report.json.manifest").exists());

    let bundle = aarm::corpus::DatasetBundle::load(&d.join("bundle")).unwrap();
    let user = bundle.table.users().id(0).to_string();
    let item = bundle.table.items().id(0).to_string();
    ok(&[
        "inspect", "--ckpt", &s(&d.join("model/model.ckpt")), "--data", &s(&d.join("bundle")), "--user", &user, "--item", &item,
        "--out", &s(&d.join("dump.json")),
    ]);
    let dump = json(&d.join("dump.json"));
    assert_eq!(dump["user"], user.as_str());
    assert!(d.join("dump.csv").exists());

    ok(&["stats", "--data", &s(&d.join("bundle")), "--shared-aspects", "--out", &s(&d.join("table.json"))]);
    let stats = json(&d.join("table.json"));
    let text = stats.to_string();
    assert!(text.contains(">5"));
}

#[test]
fn ablate_reports_each_variant() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    setup(d, "5");
    ok(&[
        "ablate", "--data", &s(&d.join("bundle")), "--embeddings", &s(&d.join("vectors.txt")), "--variants", "aarm,global_only,a_static",
        "--aspect-dim", "8", "--global-dim", "8", "--epochs", "2", "--seed", "5", "--out", &s(&d.join("ablation")),
    ]);
    for v in ["aarm", "global_only", "a_static"] {
        let r = json(&d.join("ablation").join(v).join("report.json"));
        assert_eq!(r["variant"], v);
    }
    assert!(d.join("ablation/comparison.json").exists());
    let tsv = fs::read_to_string(d.join("ablation/comparison.tsv")).unwrap();
    assert!(tsv.lines().count() >= 4);
    assert!(tsv.contains('%'));
}

#[test]
fn checkpoint_from_another_bundle_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    setup(d, "6");
    ok(&[
        "train", "--data", &s(&d.join("bundle")), "--strategy", "random_tune", "--aspect-dim", "4", "--global-dim", "4", "--epochs", "1",
        "--out", &s(&d.join("model")),
    ]);
    ok(&["synth", "--users", "25", "--items", "20", "--seed", "9", "--out", &s(&d.join("other.jsonl"))]);
    ok(&["prepare", "--input", &s(&d.join("other.jsonl")), "--out", &s(&d.join("other")), "--seed", "9"]);
    assert_eq!(
        run(&["evaluate", "--data", &s(&d.join("other")), "--ckpt", &s(&d.join("model")), "--out", &s(&d.join("r.json"))]),
        1
    );
    assert!(!d.join("r.json").exists());
}

#[test]
fn argument_errors_and_help() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["train", "--help"]), 0);
    assert_eq!(run(&["evaluate"]), 2);
    assert_eq!(run(&["train", "--variant", "aarm", "--out", "/nonexistent/x"]), 1);
    assert_eq!(run(&["prepare", "--input", "/nonexistent/file.jsonl", "--out", "/tmp/never"]), 1);
}

#[test]
fn prepare_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(&["synth", "--users", "30", "--items", "20", "--seed", "3", "--out", &s(&d.join("data.jsonl"))]);
        ok(&["prepare", "--input", &s(&d.join("data.jsonl")), "--out", &s(&d.join("bundle")), "--seed", "3"]);
    }
    let hash = |d: &Path| aarm::manifest::directory_hash(&d.join("bundle")).unwrap();
    let ma = KeyValues::read(&a.path().join("bundle/run.manifest")).unwrap();
    let mb = KeyValues::read(&b.path().join("bundle/run.manifest")).unwrap();
    assert_eq!(ma.get("seed"), mb.get("seed"));
    fs::remove_file(a.path().join("bundle/run.manifest")).unwrap();
    fs::remove_file(b.path().join("bundle/run.manifest")).unwrap();
    assert_eq!(hash(a.path()), hash(b.path()));
}
