use std::path::Path;
use std::process::{Command, Output};

fn hdbci(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdbci"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate_small(dir: &Path) {
    let o = hdbci(
        &[
            "simulate", "--seed", "5", "--out", "ds", "--blocks", "3", "--montage", "64-9", "--rows", "1", "--cols", "4",
            "--fixations", "left,right", "--noise", "0.5",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdbci(&["simulate", "--out", "ds"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("ds").exists());
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hdbci(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(hdbci(&["evaluate", "--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn itr_prints_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdbci(&["itr", "--targets", "160", "--accuracy", "0.9688", "--time", "0.75"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rate = v["itr"].as_f64().unwrap();
    assert!((551.3..=551.6).contains(&rate), "{rate}");
    assert_eq!(v["below_chance"], false);

    let o = hdbci(&["itr", "--targets", "4", "--accuracy", "1.5", "--time", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdbci(&["evaluate", "--dataset", "missing"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.json"), r#"{"windows": "x"}"#).unwrap();
    let o = hdbci(&["evaluate", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(dir.path().join("neg.json"), r#"{"windows": [-0.1]}"#).unwrap();
    let o = hdbci(&["evaluate", "--config", "neg.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(dir.path().join("model.bin"), b"not a model").unwrap();
    simulate_small(dir.path());
    let o = hdbci(&["evaluate", "--dataset", "ds", "--montage", "64-9", "--windows", "0.2", "--model", "model.bin"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_evaluate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_small(d);
    assert!(d.join("ds/manifest.json").is_file());

    let eval = ["evaluate", "--dataset", "ds", "--montage", "64-9", "--windows", "0.2,0.5", "--output-dir", "rep"];
    let o = hdbci(&eval, d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["jobs"].as_array().unwrap().len(), 1);

    let o = hdbci(&["report", "rep/run"], d);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "subject,montage,fixations,n_targets,window,accuracy,itr_actual_bpm,itr_theoretical_bps");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("sim01,64-9,left-right,8,0.5,1.0,"), "{}", lines[2]);

    // A second run resumes: the finished job is skipped and nothing is appended.
    let before = std::fs::read(d.join("rep/run/metrics.csv")).unwrap();
    let o = hdbci(&eval, d);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["skipped_jobs"][0], "64-9__left-right");
    assert_eq!(std::fs::read(d.join("rep/run/metrics.csv")).unwrap(), before);
}

#[test]
fn train_once_evaluate_later() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_small(d);
    let o = hdbci(
        &["train", "--dataset", "ds", "--montage", "64-9", "--out", "m.bin", "--window", "0.5", "--exclude-block", "2"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(meta["training_blocks"], serde_json::json!([0, 1]));
    assert_eq!(meta["n_classes"], 8);

    let o = hdbci(
        &["evaluate", "--dataset", "ds", "--montage", "64-9", "--windows", "0.3,0.5", "--model", "m.bin", "--held-out-only"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().contains(",0.5,1.0,"), "{text}");

    // Longer windows than the model was trained on are refused.
    let o = hdbci(&["evaluate", "--dataset", "ds", "--montage", "64-9", "--windows", "0.6", "--model", "m.bin"], d);
    assert_eq!(o.status.code(), Some(1));
    // So is a montage with a different channel count.
    let o = hdbci(&["evaluate", "--dataset", "ds", "--windows", "0.5", "--model", "m.bin"], d);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn dynwin_chansel_and_snr_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate_small(d);

    let o = hdbci(&["dynwin", "--dataset", "ds", "--montage", "64-9", "--out", "dyn.csv"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("dyn.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,mean_time,accuracy,itr_bpm");
    assert_eq!(lines.len(), 51);

    let o = hdbci(&["chansel", "--dataset", "ds", "--montage", "64-9", "--window", "0.3", "--channels", "PO3,POz,PO4,Oz"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,removed_channel,remaining_channels,n_channels,mean_accuracy");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,,PO3 POz PO4 Oz,4,"));

    let o = hdbci(&["snr", "--dataset", "ds", "--montage", "64-9", "--window", "0.5", "--neighbors", "4"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "numeric_label,frequency,channel,snr_db");
    assert!(text.lines().count() > 1);
}
