use std::path::Path;
use std::process::{Command, Output};

fn powerctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powerctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/k2_desk.jsonl")
        .display()
        .to_string()
}

#[test]
fn special_case_on_fixture_reaches_full_power() {
    let out = powerctl(&["solve", "--solver", "special_case", "--dataset", &fixture()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["p"], serde_json::json!([1.0, 1.0]));
}

#[test]
fn missing_dataset_names_the_path() {
    let out = powerctl(&["eval", "--solver", "fplinq", "--dataset", "/definitely/missing.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/missing.jsonl"));
}

#[test]
fn unknown_solver_is_rejected() {
    let out = powerctl(&["solve", "--solver", "magic", "--dataset", &fixture()]);
    assert!(!out.status.success());
}

#[test]
fn train_then_eval_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let out = powerctl(&[
        "train", "--k", "3", "--epochs", "2", "--n-train", "16", "--batch-size", "8", "--out", &p("ck.json"),
        "--log-out", &p("log.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(p("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let out = powerctl(&["gen", "--k", "3", "--count", "6", "--seed", "4", "--out", &p("d.jsonl")]);
    assert!(out.status.success());
    let out = powerctl(&[
        "eval", "--dataset", &p("d.jsonl"), "--checkpoint", &p("ck.json"), "--metrics-out", &p("m.csv"),
        "--summary-out", &p("s.json"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(p("m.csv")).unwrap();
    assert!(metrics.starts_with("instance_id,wsr_lpda,wsr_fplinq,ratio\n"));
    assert_eq!(metrics.lines().count(), 7);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("s.json")).unwrap()).unwrap();
    assert_eq!(summary["instances"], 6);

    let out = powerctl(&[
        "trace", "--dataset", &p("d.jsonl"), "--checkpoint", &p("ck.json"), "--max-iters", "10",
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("iteration,mean_wsr_fplinq,mean_wsr_lpda\n"));
    assert!(csv.lines().nth(10).unwrap().ends_with(','));

    // a checkpoint for a different link count is refused
    let out = powerctl(&["gen", "--k", "4", "--count", "2", "--out", &p("d4.jsonl")]);
    assert!(out.status.success());
    let out = powerctl(&["eval", "--dataset", &p("d4.jsonl"), "--checkpoint", &p("ck.json")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("K=3"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"solver": "fplinq", "count": 4, "scenario": {"num_links": 3}, "fp_iters": 20}"#).unwrap();
    let out = powerctl(&["eval", "--config", cfg.to_str().unwrap(), "--count", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["instances"], 2);
    assert_eq!(summary["fp_iters"], 20);
    assert_eq!(summary["mean_ratio"], 1.0);
}

#[test]
fn axioms_report_is_json() {
    let out = powerctl(&["axioms", "--model", "affine", "--trials", "40", "--instances", "2", "--seed", "7"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["report"]["outcomes"][0]["trials"], 40);
}
