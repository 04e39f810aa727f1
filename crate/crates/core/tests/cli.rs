use std::path::Path;
use std::process::{Command, Output};

use swingfreq::training::TrainReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swingfreq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn load_report(dir: &Path) -> TrainReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("train_report.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_fixed_header_and_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--case", "bundled:ne39", "--controller", "droop", "--step", "5:0.5", "--onset", "2", "--horizon", "15", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    let mut expect = vec!["t".to_string()];
    for name in ["delta", "omega", "u", "p"] {
        expect.extend((1..=39).map(|i| format!("{name}_{i}")));
    }
    assert_eq!(header, expect.join(","));
    assert_eq!(lines.count(), 1501);
    assert!(out.join("trajectory.json").is_file());
}

#[test]
fn simulate_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["simulate", "--case", "bundled:ring3", "--controller", "adaptive-pwl", "--seed", "9", "--noise", "0.03", "--out", path(dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &Path| std::fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn zero_disturbance_has_zero_nadir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--case", "bundled:ne39", "--no-disturbance", "--out", path(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("nadir")).unwrap();
    let nadir: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(nadir.abs() <= 1e-10, "nadir {nadir}");
}

#[test]
fn missing_case_exits_2_and_names_the_path() {
    let o = run(&["simulate", "--case", "/no/such/case.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/case.json"));
}

#[test]
fn bad_inputs_exit_2() {
    assert_eq!(run(&["simulate", "--case", "bundled:two_bus", "--dt", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--case", "bundled:nowhere"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--checkpoint", "/no/such/ck.json"]).status.code(), Some(2));
}

#[test]
fn train_reports_one_loss_per_epoch_and_resumes_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--case", "bundled:two_bus", "--controller", "droop", "--scenarios", "6", "--batch", "3", "--lr", "0.05", "--seed", "4"];
    let full = tmp.path().join("full");
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--epochs", "20", "--out", path(&full)]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = load_report(&full);
    assert_eq!(report.loss.len(), 20);
    assert!(report.loss.iter().all(|l| l.is_finite()));
    assert!(!report.grad_check.is_empty());
    assert!(full.join("checkpoint.json").is_file() && full.join("controller.json").is_file());

    let half = tmp.path().join("half");
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--epochs", "10", "--out", path(&half)]);
    assert!(run(&args).status.success());
    let resumed = tmp.path().join("resumed");
    let ck = half.join("checkpoint.json");
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--epochs", "20", "--checkpoint", path(&ck), "--out", path(&resumed)]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = load_report(&resumed);
    assert_eq!(again.loss, report.loss);
    assert_eq!(again.controller, report.controller);
}

#[test]
fn unstable_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // a huge step drives the gains past the integrator's stability limit
    let o = run(&["train", "--case", "bundled:two_bus", "--controller", "droop", "--lr", "1e4", "--scenarios", "2", "--batch", "1", "--epochs", "5", "--grad-check", "0", "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(tmp.path().join("last_good.json").is_file());
}

#[test]
fn evaluate_tables_share_one_scenario_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ev");
    let o = run(&["evaluate", "--case", "bundled:ring3", "--controller", "adaptive-pwl", "--controller", "integral-pwl", "--controller", "droop", "--scenarios", "4", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(csv.lines().next().unwrap().ends_with("transient_ratio,restoration_ratio"));
    assert!(rows.iter().all(|r| r[2] == "4" && r[3] == rows[0][3]));

    let single = tmp.path().join("single");
    let o = run(&["evaluate", "--case", "bundled:ring3", "--controller", "droop", "--scenarios", "4", "--out", path(&single)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(single.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(!csv.contains("_ratio"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(single.join("comparison.json")).unwrap()).unwrap();
    assert!(json["rows"][0].get("transient_ratio").is_none());
}

#[test]
fn evaluate_rejects_mismatched_controller() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("two.json");
    std::fs::write(&ck, r#"{"type": "droop", "gains": [1.0, 2.0]}"#).unwrap();
    let o = run(&["evaluate", "--case", "bundled:ring3", "--checkpoint", path(&ck), "--scenarios", "2", "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn certify_refuses_saturation() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["certify", "--case", "bundled:two_bus", "--controller", "adaptive-pwl", "--saturate", "0.5", "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("refused"));

    let ck = tmp.path().join("sat.json");
    std::fs::write(&ck, r#"{"type": "droop", "gains": [1.0, 1.0], "saturation": 0.3}"#).unwrap();
    let o = run(&["certify", "--case", "bundled:two_bus", "--checkpoint", path(&ck), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn certify_passes_adaptive_and_flags_positive_feedback() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good");
    let o = run(&["certify", "--case", "bundled:two_bus", "--controller", "adaptive-pwl", "--scenarios", "5", "--samples", "200", "--out", path(&good)]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(good.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["pass"], true);
    for key in ["gamma1", "gamma2", "beta1", "beta2", "worst_margin", "worst_time"] {
        assert!(cert[key].is_f64(), "{key}");
    }
    assert!(cert["roa"]["r"].as_f64().unwrap() > 0.0 && cert["roa"]["rho"].as_f64().unwrap() > 0.0);

    let bad = tmp.path().join("bad");
    let ck = tmp.path().join("neg.json");
    std::fs::write(&ck, r#"{"type": "linear", "gains": [-1.0, -1.0]}"#).unwrap();
    let o = run(&["certify", "--case", "bundled:two_bus", "--checkpoint", path(&ck), "--scenarios", "3", "--samples", "200", "--out", path(&bad)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("first violation"), "{}", stderr(&o));
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bad.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["pass"], false);
    assert!(cert["first_violation"]["index"].is_u64());
}

#[test]
fn thread_cap_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("SWINGFREQ_THREADS", "1")
        .args(["evaluate", "--case", "bundled:two_bus", "--controller", "droop", "--scenarios", "3", "--out", path(tmp.path())])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}
