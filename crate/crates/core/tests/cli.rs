use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaymargin")).args(args).env("DELAYMARGIN_THREADS", "2").output().expect("binary runs")
}

fn run_spec(cmd: &str, name: &str, extra: &[&str]) -> Output {
    let path = spec(name);
    let mut args = vec![cmd, "--input", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn analyze_exit_codes() {
    for (name, code) in [
        ("scalar_stable", 0),
        ("two_dim_kernel", 0),
        ("scalar_unstable", 3),
        ("imaginary_eigenvalue", 1),
    ] {
        let out = run_spec("analyze", name, &[]);
        assert_eq!(out.status.code(), Some(code), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn analyze_writes_report_only_with_out() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run");
    let out = run_spec("analyze", "scalar_stable", &["--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(target.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
    assert!(target.join("summary.txt").exists());
    let before: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    run_spec("analyze", "scalar_stable", &[]);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), before.len());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, files, extra) in [
        ("roots", &["roots.csv", "roots.json"][..], &[][..]),
        ("simulate", &["trajectory.csv", "decay.json"][..], &["--seed", "7", "--t-final", "12"][..]),
    ] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        for target in [&a, &b] {
            let mut args = extra.to_vec();
            args.extend_from_slice(&["--out", target.to_str().unwrap()]);
            let out = run_spec(cmd, "scalar_feedback", &args);
            assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        for f in files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{cmd}/{f} differs between runs");
        }
    }
}

#[test]
fn margin_batch_decreases_with_mu() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["margin", "--mus", "10,100,1000", "--d", "-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("margin.json")).unwrap()).unwrap();
    let kappas: Vec<f64> = json["margins"].as_array().unwrap().iter().map(|m| m["margin"]["kappa"].as_f64().unwrap()).collect();
    assert_eq!(kappas.len(), 3);
    assert!(kappas.windows(2).all(|w| w[1] < w[0]), "{kappas:?}");
}

#[test]
fn margin_rejects_non_feedback_spec() {
    let out = run_spec("margin", "scalar_stable", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feedback"));
}

#[test]
fn sweep_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_spec("sweep", "scalar_feedback", &["--tau-range", "0.1:0.5:0.2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,abscissa,hyperbolicity_direct,stability_direct,stability_rewritten,below_kappa"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"n": 2, "B": [[[1.0, 0.0]]]}"#).unwrap();
    let out = run(&["analyze", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(run(&["analyze"]).status.code(), Some(1));
}
