use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rrc-storm"));
    c.env_remove("RRC_STORM_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn rrc-storm")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn detect(dir: &Path, name: &str, trace: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["detect", "--trace", p(trace), "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn eval_args<'a>(det: &'a Path, syn: &'a Path, out: &'a Path) -> Vec<String> {
    vec![
        "eval".into(),
        "--decisions".into(),
        det.join("decisions.csv").display().to_string(),
        "--alerts".into(),
        det.join("alerts.json").display().to_string(),
        "--labels".into(),
        syn.join("labels.csv").display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

#[test]
fn help_lists_exit_codes() {
    let out = ok(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    assert!(text.contains("4  inputs that do not belong together"));
}

#[test]
fn synth_writes_four_days_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), "a", &["--seed", "1"]);
    let b = synth(tmp.path(), "b", &["--seed", "1"]);
    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("ts,msg3,msg5,n_bue"));
    assert_eq!(trace.lines().count(), 345_600 + 1);
    assert_eq!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(b.join("trace.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("labels.csv")).unwrap(),
        fs::read(b.join("labels.csv")).unwrap()
    );
    let manifests: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_str()
                .unwrap()
                .contains("manifest")
        })
        .collect();
    assert_eq!(manifests.len(), 1);
    let c = synth(tmp.path(), "c", &["--seed", "2"]);
    assert_ne!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(c.join("trace.csv")).unwrap()
    );
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["synth"])
        .env("RRC_STORM_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("synth/trace.csv").exists());
    assert_eq!(code(&run(&["synth"])), 2);
}

#[test]
fn infeasible_proportion_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("dense.toml");
    fs::write(&cfg, "[scenario]\nattack = 0.45\nhighload = 0.45\n").unwrap();
    let out = run(&[
        "synth",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("between two normal periods"), "{err}");
}

#[test]
fn unknown_config_key_reports_its_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("typo.toml");
    fs::write(&cfg, "seed = 3\n[detectr]\nconfirm_count = 2\n").unwrap();
    let out = run(&[
        "synth",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("detectr"), "{err}");
}

#[test]
fn single_attack_gives_one_alert_and_scores() {
    let tmp = TempDir::new().unwrap();
    let syn = synth(
        tmp.path(),
        "syn",
        &["--scenario", "single_attack", "--seed", "1"],
    );
    let det = detect(tmp.path(), "det", &syn.join("trace.csv"), &[]);
    let alerts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(det.join("alerts.json")).unwrap()).unwrap();
    assert_eq!(alerts.as_array().unwrap().len(), 1);
    assert_eq!(alerts[0]["verdict"], "attack");

    let ev = tmp.path().join("ev");
    let out = bin().args(eval_args(&det, &syn, &ev)).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    for key in [
        "accuracy",
        "precision",
        "recall",
        "mean_latency_s",
        "confusion",
        "verdicts",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["recall"]["value"], 1.0);
    for f in [
        "report.csv",
        "plot_msg3.csv",
        "plot_r1.csv",
        "plot_r2.csv",
        "manifest.json",
    ] {
        assert!(ev.join(f).exists(), "{f}");
    }
}

#[test]
fn gaussian_needs_a_reference_day() {
    let tmp = TempDir::new().unwrap();
    let syn = synth(tmp.path(), "syn", &["--seed", "1"]);
    let trace = syn.join("trace.csv");
    let out = run(&[
        "detect",
        "--trace",
        p(&trace),
        "--method",
        "gaussian",
        "--out",
        p(&tmp.path().join("g")),
    ]);
    assert_eq!(code(&out), 2);
    let labels = syn.join("labels.csv");
    let det = detect(
        tmp.path(),
        "g",
        &trace,
        &[
            "--method",
            "gaussian",
            "--reference-day",
            "1",
            "--labels",
            p(&labels),
        ],
    );
    let head = fs::read_to_string(det.join("decisions.csv")).unwrap();
    let second = head.lines().nth(1).unwrap();
    // static thresholds exist from the first second
    assert!(
        second.split(',').nth(3).is_some_and(|th| !th.is_empty()),
        "{second}"
    );
}

#[test]
fn broken_traces_exit_with_data_error() {
    let tmp = TempDir::new().unwrap();
    let gap = tmp.path().join("gap.csv");
    fs::write(&gap, "ts,msg3,msg5,n_bue\n0,1,1,5\n1,1,1,5\n3,1,1,5\n").unwrap();
    let out = run(&[
        "detect",
        "--trace",
        p(&gap),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let junk = tmp.path().join("junk.csv");
    fs::write(&junk, "ts,msg3,msg5,n_bue\n0,1,1,5\n1,two,1,5\n").unwrap();
    let out = run(&[
        "detect",
        "--trace",
        p(&junk),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn mismatched_runs_exit_with_consistency_error() {
    let tmp = TempDir::new().unwrap();
    let one = synth(
        tmp.path(),
        "one",
        &["--scenario", "single_attack", "--seed", "1"],
    );
    let two = synth(
        tmp.path(),
        "two",
        &["--scenario", "single_attack", "--seed", "2"],
    );
    let det = detect(tmp.path(), "det", &one.join("trace.csv"), &[]);
    let out = bin()
        .args(eval_args(&det, &two, &tmp.path().join("ev")))
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);

    // a file edited after the fact no longer matches its manifest
    let mut alerts = fs::read_to_string(det.join("alerts.json")).unwrap();
    alerts = alerts.replace("attack", "highload");
    fs::write(det.join("alerts.json"), alerts).unwrap();
    let out = bin()
        .args(eval_args(&det, &one, &tmp.path().join("ev")))
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
}

#[test]
fn pipeline_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let mut files = Vec::new();
    for run_name in ["a", "b"] {
        let root = tmp.path().join(run_name);
        let syn = synth(&root, "syn", &["--scenario", "multi_random", "--seed", "3"]);
        let det = detect(&root, "det", &syn.join("trace.csv"), &[]);
        let ev = root.join("ev");
        let out = bin().args(eval_args(&det, &syn, &ev)).output().unwrap();
        assert!(out.status.success());
        files.push([
            fs::read(syn.join("trace.csv")).unwrap(),
            fs::read(syn.join("labels.csv")).unwrap(),
            fs::read(det.join("decisions.csv")).unwrap(),
            fs::read(det.join("alerts.json")).unwrap(),
            fs::read(ev.join("report.json")).unwrap(),
            fs::read(ev.join("report.csv")).unwrap(),
        ]);
    }
    assert!(files[0] == files[1]);
}

#[test]
fn suite_runs_every_scenario() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("suite");
    let out = ok(&["eval", "--suite", "--seeds", "1", "--out", p(&out_dir)]);
    let summary = String::from_utf8(out.stdout).unwrap();
    for name in [
        "single_attack",
        "multi_random",
        "low_unavailability",
        "low_rate",
        "busy_gnb",
    ] {
        assert!(summary.contains(name), "{name} missing");
    }
    let table = fs::read_to_string(out_dir.join("suite.csv")).unwrap();
    assert!(table.starts_with("scenario,seed,method,feature,level,"));
    assert!(out_dir.join("suite.json").exists());
}
