use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use techimpact::checksum_dir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_techimpact"))
}

/// A small config that runs every stage in a few seconds.
fn small_config(dir: &Path) -> PathBuf {
    let out = bin().arg("init-config").output().unwrap();
    assert!(out.status.success());
    let mut cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["synth"]["n_patents"] = 600.into();
    cfg["train"]["max_epochs"] = 8.into();
    cfg["cv_folds"] = 2.into();
    cfg["explain"]["mode"]["n_permutations"] = 10.into();
    cfg["explain"]["background_size"] = 10.into();
    cfg["explain"]["max_instances"] = 5.into();
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = run(&["run"], &cfg, &tmp.path().join("nope"));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn report_lists_every_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    std::fs::create_dir(&out).unwrap();
    let o = run(&["report"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for f in ["thresholds.json", "labels_summary.json", "metrics.json", "comparison.csv"] {
        assert!(err.contains(f), "{f} not in {err}");
    }
}

#[test]
fn stage_by_stage_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let full = tmp.path().join("full");
    let steps = tmp.path().join("steps");
    std::fs::create_dir(&full).unwrap();
    std::fs::create_dir(&steps).unwrap();

    let o = run(&["run"], &cfg, &full);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_slice(&std::fs::read(full.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");

    for stage in [
        "synth", "label", "features", "gridsearch", "train", "cv", "evaluate", "explain", "jt-test", "topic-score", "report",
    ] {
        let o = run(&[stage], &cfg, &steps);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }

    let mut a = checksum_dir(&full).unwrap();
    let b = checksum_dir(&steps).unwrap();
    // only the run command writes the resolved config
    a.remove("config.json");
    let hashes = |m: &BTreeMap<_, techimpact::pipeline::FileEntry>| {
        m.iter().map(|(k, v): (&String, _)| (k.clone(), v.sha256.clone())).collect::<Vec<_>>()
    };
    assert_eq!(hashes(&a), hashes(&b));

    // rerunning evaluate is byte-identical
    let before = std::fs::read(steps.join("metrics.json")).unwrap();
    let o = run(&["evaluate"], &cfg, &steps);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(before, std::fs::read(steps.join("metrics.json")).unwrap());
    let report = std::fs::read_to_string(steps.join("report.md")).unwrap();
    assert!(report.contains("Sum of multiclass MCC"));
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    std::fs::create_dir(&a).unwrap();
    std::fs::create_dir(&b).unwrap();
    assert!(run(&["synth"], &cfg, &a).status.success());
    assert!(bin().arg("--config").arg(&cfg).arg("--out").arg(&b).args(["--seed", "8", "synth"]).output().unwrap().status.success());
    assert_ne!(std::fs::read(a.join("corpus.jsonl")).unwrap(), std::fs::read(b.join("corpus.jsonl")).unwrap());
}
