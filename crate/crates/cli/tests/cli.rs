use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn coft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coft"))
        .args(args)
        .env_remove("COFT_SEED")
        .output()
        .unwrap()
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn synth(dir: &Path, extra: &[&str]) -> (PathBuf, String) {
    let mut args = vec!["synth", "--classes", "5", "--per-class", "40", "--dim", "32", "--seed", "7", "--out"];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    let out = coft(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &records(&out)[0];
    (PathBuf::from(r["manifest"].as_str().unwrap()), r["checksum"].as_str().unwrap().to_owned())
}

const QUICK: [&str; 4] = ["--set", "phase1.epochs=5", "--set", "phase2.epochs=5"];

fn run(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--dataset", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(extra);
    coft(&args)
}

fn checkpoint_bytes(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(run_dir.join("checkpoints"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn truth(manifest: &Path) -> Vec<usize> {
    fs::read_to_string(manifest.with_extension("truth"))
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

/// `(sample_id, label, status)` per exported record.
fn label_file(path: &Path) -> Vec<(usize, usize, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (
                v["sample_id"].as_u64().unwrap() as usize,
                v["label"].as_u64().unwrap() as usize,
                v["status"].as_str().unwrap().to_owned(),
            )
        })
        .collect()
}

#[test]
fn synth_writes_files_and_repeats_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, first) = synth(dir.path(), &[]);
    assert!(manifest.exists());
    assert!(manifest.with_extension("truth").exists());
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let payload = manifest.parent().unwrap().join(m["payload_path"].as_str().unwrap());
    assert!(payload.exists());
    let (_, second) = synth(dir.path(), &[]);
    assert_eq!(first, second);
}

#[test]
fn impossible_orthogonal_anchors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = coft(&["synth", "--dim", "2", "--classes", "10", "--orthogonal", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&dir.path().join("absent.json"), &dir.path().join("run"), &["--mode", "coft"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_override_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let out = run(&manifest, &dir.path().join("run"), &["--set", "phase1.epochs=-3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&manifest, out, &["--mode", "coft", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ca = checkpoint_bytes(&a);
    assert!(!ca.is_empty());
    assert_eq!(ca, checkpoint_bytes(&b));
    for f in ["config.toml", "metrics.jsonl", "labels/zero-shot.jsonl", "labels/filter-model1-model2.jsonl"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn single_round_without_contrast_matches_coft() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let (a, b) = (dir.path().join("coft"), dir.path().join("plus"));
    assert!(run(&manifest, &a, &["--mode", "coft", "--seed", "3"]).status.success());
    assert!(run(&manifest, &b, &["--mode", "coft-plus", "--rounds", "1", "--gamma", "0", "--seed", "3"])
        .status
        .success());
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
}

#[test]
fn seed_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let seed_of = |out: &Output| records(out).last().unwrap()["seed"].as_u64().unwrap();
    let m = manifest.to_str().unwrap();
    let with_env = |extra: &[&str], name: &str| {
        let o = dir.path().join(name);
        let mut args = vec!["run", "--dataset", m, "--out", o.to_str().unwrap(), "--mode", "coft"];
        args.extend_from_slice(&QUICK);
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_coft"))
            .args(&args)
            .env("COFT_SEED", "41")
            .output()
            .unwrap()
    };
    assert_eq!(seed_of(&with_env(&[], "env")), 41);
    assert_eq!(seed_of(&with_env(&["--seed", "5"], "flag")), 5);
}

#[test]
fn evaluation_without_a_run_is_zero_shot_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let run_dir = dir.path().join("run");
    assert!(run(&manifest, &run_dir, &["--mode", "coft"]).status.success());

    let out = coft(&["eval", "--dataset", manifest.to_str().unwrap()]);
    assert!(out.status.success());
    let recs = records(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["metric"], "zero_shot_accuracy");

    let truth = truth(&manifest);
    let zs = label_file(&run_dir.join("labels/zero-shot.jsonl"));
    let hits = zs.iter().filter(|(id, y, _)| truth[*id] == *y).count();
    assert_eq!(recs[0]["value"].as_f64().unwrap(), hits as f64 / zs.len() as f64);
}

#[test]
fn evaluation_matches_a_recount_of_the_label_exports() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let run_dir = dir.path().join("run");
    assert!(run(&manifest, &run_dir, &["--mode", "coft-plus", "--seed", "2"]).status.success());
    let out = coft(&["eval", "--dataset", manifest.to_str().unwrap(), "--run-dir", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    let metric = |name: &str| -> Vec<&Value> { recs.iter().filter(|r| r["metric"] == name).collect() };
    let truth = truth(&manifest);

    let zs = label_file(&run_dir.join("labels/zero-shot.jsonl"));
    let zs_hits = zs.iter().filter(|(id, y, _)| truth[*id] == *y).count();
    assert_eq!(metric("zero_shot_accuracy")[0]["value"].as_f64().unwrap(), zs_hits as f64 / zs.len() as f64);

    let clean = metric("clean_set");
    assert_eq!(clean.len(), 2);
    for (rec, file) in clean.iter().zip(["filter-model1-model2", "filter-model2-model1"]) {
        let labels = label_file(&run_dir.join("labels").join(format!("{file}.jsonl")));
        let kept: Vec<_> = labels.iter().filter(|r| r.2 == "clean").collect();
        let kept_hits = kept.iter().filter(|(id, y, _)| truth[*id] == *y).count();
        let all_hits = labels.iter().filter(|(id, y, _)| truth[*id] == *y).count();
        assert_eq!(rec["size"].as_u64().unwrap() as usize, kept.len());
        assert_eq!(rec["precision"].as_f64().unwrap(), kept_hits as f64 / kept.len() as f64);
        assert_eq!(rec["recall"].as_f64().unwrap(), kept_hits as f64 / all_hits as f64);
        assert_eq!(rec["candidate_accuracy"].as_f64().unwrap(), all_hits as f64 / labels.len() as f64);
    }
    assert_eq!(metric("model_accuracy").len(), 2);
    assert_eq!(metric("student_accuracy").len(), 2);
    let ensemble = metric("ensemble_accuracy")[0]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ensemble));
}

#[test]
fn noiseless_aligned_data_gives_perfect_clean_sets() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &["--alignment", "1", "--sigma", "0.0001"]);
    let run_dir = dir.path().join("run");
    assert!(run(&manifest, &run_dir, &["--mode", "coft"]).status.success());
    let out = coft(&["eval", "--dataset", manifest.to_str().unwrap(), "--run-dir", run_dir.to_str().unwrap()]);
    for r in records(&out).iter().filter(|r| r["metric"] == "clean_set") {
        assert_eq!(r["precision"].as_f64(), Some(1.0));
    }
}

#[test]
fn evaluation_without_sidecar_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    fs::remove_file(manifest.with_extension("truth")).unwrap();
    let out = coft(&["eval", "--dataset", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sidecar"));
}

#[test]
fn written_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let a = dir.path().join("a");
    assert!(run(&manifest, &a, &["--mode", "coft", "--seed", "9"]).status.success());
    let b = dir.path().join("b");
    let cfg = a.join("config.toml");
    let o = coft(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
}

#[test]
fn gradient_check_passes() {
    let out = coft(&["check-grads", "--instances", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out);
    assert_eq!(recs.len(), 7);
    assert_eq!(recs.last().unwrap()["passed"], true);
}

#[test]
fn truth_export_attaches_labels_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(dir.path(), &[]);
    let run_dir = dir.path().join("run");
    assert!(run(&manifest, &run_dir, &["--mode", "coft"]).status.success());
    let plain = fs::read_to_string(run_dir.join("labels/filter-model1-model2.jsonl")).unwrap();
    assert!(!plain.contains("ground_truth"));

    let export = dir.path().join("export");
    let args = ["eval", "--dataset", manifest.to_str().unwrap(), "--run-dir", run_dir.to_str().unwrap(), "--with-truth"];
    let mut args = args.to_vec();
    args.push(export.to_str().unwrap());
    assert!(coft(&args).status.success());
    let truth = truth(&manifest);
    for name in ["zero-shot", "filter-model1-model2", "filter-model2-model1"] {
        for line in fs::read_to_string(export.join(format!("{name}.jsonl"))).unwrap().lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            let id = v["sample_id"].as_u64().unwrap() as usize;
            assert_eq!(v["ground_truth"].as_u64().unwrap() as usize, truth[id]);
        }
    }
}
