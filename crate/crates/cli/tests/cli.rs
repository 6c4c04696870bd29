use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rwt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwt")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

/// Small corpus shared by most tests.
fn corpus(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("corpus");
    let o = rwt(&["synth", "--n", &n.to_string(), "--image-side", "64", "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = rwt(&["select", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = rwt(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_without_manifest_names_the_flag() {
    let o = rwt(&["train", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--manifest"), "{}", stderr(&o));
}

#[test]
fn missing_out_is_a_usage_error() {
    let o = rwt(&["select", "--manifest", "m.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out"));
}

#[test]
fn spec_and_config_conflict() {
    let o = rwt(&["synth", "--spec", "a.json", "--config", "b.json", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sel.jsonl");
    let o = rwt(&["select", "--manifest", s(&dir.path().join("absent.jsonl")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    // The run is still recorded.
    assert!(dir.path().join("effective_config.json").exists());
    assert!(dir.path().join("rwt.log").exists());
}

#[test]
fn synth_select_aggregate_stats() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 16);
    let manifest = c.join("manifest.jsonl");
    assert!(manifest.exists());
    assert!(c.join("effective_config.json").exists());
    assert!(c.join("rwt.log").exists());
    let eff = read_json(&c.join("effective_config.json"));
    assert_eq!(eff["command"], "synth");
    assert_eq!(eff["seed"], 3);
    assert_eq!(eff["image_side"], 64);

    // File value loses to the flag.
    let cfg = dir.path().join("gate.json");
    std::fs::write(&cfg, r#"{"gate_cutoff": 0.5, "region_threshold": 0.7}"#).unwrap();
    let sel_dir = dir.path().join("sel");
    let sel = sel_dir.join("selected.jsonl");
    let o = rwt(&["select", "--manifest", s(&manifest), "--config", s(&cfg), "--gate-cutoff", "1e-4", "--out", s(&sel)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eff = read_json(&sel_dir.join("effective_config.json"));
    assert_eq!(eff["gate_cutoff"], 1e-4);
    assert_eq!(eff["region_threshold"], 0.7);
    let kept = std::fs::read_to_string(&sel).unwrap();
    assert!(kept.lines().count() > 0 && kept.lines().count() <= 16);

    let agg = dir.path().join("agg").join("labels.jsonl");
    let o = rwt(&["aggregate", "--manifest", s(&manifest), "--votes", s(&c.join("votes.csv")), "--out", s(&agg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["resolved"], 16);

    let st = dir.path().join("stats");
    let o = rwt(&["stats", "--manifest", s(&agg), "--votes", s(&c.join("votes.csv")), "--out-dir", s(&st)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svgs = std::fs::read_dir(&st).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    assert!(svgs >= 2);
}

#[test]
fn oracle_scoremaps_match_the_corpus_cache() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 4);
    let maps = dir.path().join("maps");
    let o = rwt(&["scoremaps", "--manifest", s(&c.join("manifest.jsonl")), "--out", s(&maps)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for i in 0..4 {
        let name = format!("syn_{i:05}.rwt");
        assert_eq!(std::fs::read(maps.join(&name)).unwrap(), std::fs::read(c.join("maps").join(&name)).unwrap());
    }
}

#[test]
fn train_eval_and_replay_from_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 24);
    let manifest = c.join("manifest.jsonl");
    let ckpt = dir.path().join("ckpt");
    let args = ["train", "--manifest", s(&manifest), "--variant", "binarized-linear", "--side", "64", "--epochs", "3", "--seed", "5"];
    let o = rwt(&[&args[..], &["--out", s(&ckpt)]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ckpt.join("model.rwt").exists());
    let history = std::fs::read_to_string(ckpt.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,train_loss,val_loss"));
    let eff = read_json(&ckpt.join("effective_config.json"));
    assert_eq!(eff["train"]["target_side"], 64);
    assert_eq!(eff["model"]["seed"], 5);

    // Same run from the echoed config alone.
    let again = dir.path().join("again");
    let o = rwt(&["train", "--manifest", s(&manifest), "--config", s(&ckpt.join("effective_config.json")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(again.join("history.csv")).unwrap(), history);

    let report = dir.path().join("report.json");
    let o = rwt(&["eval", "--ckpt", s(&ckpt), "--manifest", s(&manifest), "--split", "val", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("binarized_linear"));
    let r = read_json(&report);
    let m = &r["metrics"];
    for k in ["auc", "precision", "recall", "f1", "fpr", "fnr"] {
        assert!(m[k].as_f64().unwrap().is_finite(), "{k}");
    }
    let val = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .filter(|l| serde_json::from_str::<Value>(l).unwrap()["split"] == "val")
        .count();
    assert_eq!(r["n"], val);
}
