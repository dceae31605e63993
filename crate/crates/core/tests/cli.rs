use std::path::Path;
use std::process::{Command, Output};

use fedvote::data::load_dataset;
use fedvote::metrics::MetricsReport;

fn fedvote(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedvote"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FEDVOTE_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_writes_the_requested_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedvote(
        &[
            "generate",
            "--per-class",
            "500",
            "--dim",
            "16",
            "--seed",
            "1",
            "--out",
            "a",
        ],
        tmp.path(),
    );
    ok(&out);
    let d = load_dataset(&tmp.path().join("a")).unwrap();
    assert_eq!(d.len(), 2000);
    assert_eq!(d.feature_shape(), &[16]);
    assert_eq!(d.class_counts(), vec![500; 4]);

    ok(&fedvote(
        &[
            "generate",
            "--per-class",
            "500",
            "--dim",
            "16",
            "--seed",
            "1",
            "--out",
            "b",
        ],
        tmp.path(),
    ));
    for f in ["data.bin", "labels.bin", "manifest.json"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(f)).unwrap(),
            std::fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fedvote(
        &[
            "generate",
            "--per-class",
            "3",
            "--dim",
            "2",
            "--seed",
            "9",
            "--out",
            "flag",
        ],
        tmp.path(),
    ));
    let env = Command::new(env!("CARGO_BIN_EXE_fedvote"))
        .args(["generate", "--per-class", "3", "--dim", "2", "--out", "env"])
        .current_dir(tmp.path())
        .env("FEDVOTE_SEED", "9")
        .output()
        .unwrap();
    ok(&env);
    assert_eq!(
        std::fs::read(tmp.path().join("flag/data.bin")).unwrap(),
        std::fs::read(tmp.path().join("env/data.bin")).unwrap()
    );
}

#[test]
fn zero_per_class_is_a_usage_error_naming_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedvote(&["generate", "--per-class", "0", "--dim", "16"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--per-class"));
}

#[test]
fn run_with_defaults_logs_one_round_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fedvote(&["run", "--out", "r1"], tmp.path()));
    ok(&fedvote(&["run", "--out", "r2"], tmp.path()));
    let log = std::fs::read_to_string(tmp.path().join("r1/rounds.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert_eq!(
        log,
        std::fs::read_to_string(tmp.path().join("r2/rounds.jsonl")).unwrap()
    );
    for f in [
        "table.txt",
        "report.json",
        "confusion.csv",
        "config.json",
        "timings.jsonl",
    ] {
        assert!(tmp.path().join("r1").join(f).is_file(), "{f}");
    }
    assert!(tmp
        .path()
        .join("r1/round-001/global/ensemble.json")
        .is_file());
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"clients": 2, "rounds": 3, "seed": 4,
        "dataset": {"synthetic": {"per_class": 30, "dim": 16, "separation": 6.0}},
        "train": {"epochs": 2}}"#;
    std::fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    ok(&fedvote(
        &["run", "--config", "cfg.json", "--rounds", "2", "--out", "r"],
        tmp.path(),
    ));
    let log = std::fs::read_to_string(tmp.path().join("r/rounds.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["clients"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.json"), r#"{"clients": 0, "bogus": 1}"#).unwrap();
    let out = fedvote(&["run", "--config", "cfg.json", "--out", "r"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_and_predict_a_saved_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"dataset": {"synthetic": {"per_class": 100, "dim": 16, "separation": 6.0}}}"#;
    std::fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    ok(&fedvote(
        &["run", "--config", "cfg.json", "--out", "r"],
        tmp.path(),
    ));
    let reported: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("r/report.json")).unwrap())
            .unwrap();

    // fresh samples from the same distribution as the run's data
    ok(&fedvote(
        &[
            "generate",
            "--per-class",
            "100",
            "--dim",
            "16",
            "--seed",
            "0",
            "--out",
            "d",
        ],
        tmp.path(),
    ));
    ok(&fedvote(
        &[
            "evaluate",
            "--model",
            "r/round-001/global",
            "--dataset",
            "d",
            "--out",
            "ev",
        ],
        tmp.path(),
    ));
    let text = std::fs::read_to_string(tmp.path().join("ev/report.json")).unwrap();
    let ev: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&ev).unwrap(), text);
    assert!(
        ev.accuracy >= reported.accuracy - 0.05,
        "{} vs {}",
        ev.accuracy,
        reported.accuracy
    );
    let csv = std::fs::read_to_string(tmp.path().join("ev/confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    ok(&fedvote(
        &[
            "predict",
            "--model",
            "r/round-001/global/member-0-linear",
            "--dataset",
            "d",
            "--out",
            "p.csv",
        ],
        tmp.path(),
    ));
    let preds = std::fs::read_to_string(tmp.path().join("p.csv")).unwrap();
    assert_eq!(preds.lines().count(), 401);
    assert!(preds.starts_with("index,predicted,class_name\n0,"));
}

#[test]
fn evaluate_on_own_training_data_is_not_worse() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"dataset": {"synthetic": {"per_class": 100, "dim": 16, "separation": 6.0}}}"#;
    std::fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    ok(&fedvote(
        &["run", "--config", "cfg.json", "--out", "r"],
        tmp.path(),
    ));
    let reported: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("r/report.json")).unwrap())
            .unwrap();
    // data/test is the held-out split; data/train is the pooled training set
    ok(&fedvote(
        &[
            "evaluate",
            "--model",
            "r/round-001/global",
            "--dataset",
            "r/data/train",
            "--out",
            "ev",
        ],
        tmp.path(),
    ));
    let ev: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ev/report.json")).unwrap())
            .unwrap();
    assert!(ev.accuracy >= reported.accuracy - 0.05);
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fedvote(
        &["generate", "--per-class", "5", "--dim", "4", "--out", "d"],
        tmp.path(),
    ));
    let out = fedvote(
        &["evaluate", "--model", "nowhere", "--dataset", "d"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = fedvote(
        &["predict", "--model", "nowhere", "--dataset", "d"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shape_mismatch_is_a_usage_error_showing_both_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"dataset": {"synthetic": {"per_class": 30, "dim": 16, "separation": 6.0}}}"#;
    std::fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    ok(&fedvote(
        &["run", "--config", "cfg.json", "--out", "r"],
        tmp.path(),
    ));
    ok(&fedvote(
        &["generate", "--per-class", "5", "--dim", "9", "--out", "d9"],
        tmp.path(),
    ));
    let out = fedvote(
        &[
            "evaluate",
            "--model",
            "r/round-001/global",
            "--dataset",
            "d9",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[16]") && err.contains("[9]"), "{err}");
}

#[test]
fn partition_writes_one_directory_per_client() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fedvote(
        &["generate", "--per-class", "10", "--dim", "4", "--out", "d"],
        tmp.path(),
    ));
    ok(&fedvote(
        &[
            "partition",
            "--dataset",
            "d",
            "--clients",
            "3",
            "--out",
            "shards",
        ],
        tmp.path(),
    ));
    let sizes: Vec<usize> = (0..3)
        .map(|i| {
            load_dataset(&tmp.path().join(format!("shards/client-{i}")))
                .unwrap()
                .len()
        })
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 40);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}
