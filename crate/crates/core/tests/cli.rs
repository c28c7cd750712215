//! Runs the `dquon` binary against small configs.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dquon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dquon")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, json: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, json).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dquon(&args)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn minimal_identity_mutator_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), r#"{"q":0.5,"K":64,"family":{"kind":"identity"},"tasks":["mutator"]}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["pass"], true);
    let residual = s["tasks"]["mutator"]["metrics"]["qmutator_residual"]["value"].as_f64().unwrap();
    assert!(residual < 1e-12);
    for f in ["a.csv", "b.csv", "metrics.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let a = std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap();
    assert_eq!(a.lines().count(), 64);
}

#[test]
fn split_support_reproduction_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        r#"{"q":0.5,"K":256,"family":{"kind":"rank_one","alpha_def":[0,1]},
            "tasks":["family","theta",{"kind":"bicoherent","z_grid":{"radius_fraction":0.8,"n_r":3,"n_theta":4}}]}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(dir.path());
    assert!(s["tasks"]["family"]["metrics"]["biorthogonality"]["value"].as_f64().unwrap() < 1e-11);
    assert!(s["tasks"]["bicoherent"]["metrics"]["closed_form"]["value"].as_f64().unwrap() < 1e-10);
    let family: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/family.json")).unwrap()).unwrap();
    assert_eq!(family["K"], 256);
    assert_eq!(family["similarity"]["kind"], "rank_one");
    let csv = std::fs::read_to_string(dir.path().join("out/bicoherent.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
}

#[test]
fn bicoherent_outside_radius_domain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), r#"{"q":1.5,"K":64,"family":{"kind":"identity"},"tasks":["bicoherent"]}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radius"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), r#"{"q":0.5,"family":{"kind":"rank_one","alpha_def":[0]}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("family"));
}

#[test]
fn tolerance_failure_exits_one_and_names_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        r#"{"q":0.5,"K":64,"family":{"kind":"rank_one","alpha_def":[0,1]},"tasks":["mutator"],
            "tolerances":{"mutator.qmutator_residual":1e-30}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mutator.qmutator_residual"));
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("mutator,qmutator_residual,") && l.ends_with(",false")));
}

fn strip_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn same_seed_gives_identical_summary() {
    let cfg = r#"{"q":0.5,"K":64,"family":{"kind":"rank_one","alpha_def":[0.3,-0.2]},
                  "tasks":["mutator",{"kind":"resolution","pairs":5}],"seed":11}"#;
    let (d1, d2, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_config(d1.path(), cfg, &[]).status.code(), Some(0));
    assert_eq!(run_config(d2.path(), cfg, &[]).status.code(), Some(0));
    assert_eq!(run_config(d3.path(), cfg, &["--seed", "12"]).status.code(), Some(0));
    let (s1, s2, s3) = (summary(d1.path()), summary(d2.path()), summary(d3.path()));
    assert_eq!(
        serde_json::to_string(&strip_timings(s1.clone())).unwrap(),
        serde_json::to_string(&strip_timings(s2)).unwrap()
    );
    assert_eq!(s3["seed"], 12);
    assert_ne!(
        s1["tasks"]["resolution"]["metrics"]["resolution_error"]["value"],
        s3["tasks"]["resolution"]["metrics"]["resolution_error"]["value"]
    );
}

#[test]
fn every_summary_metric_is_in_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), r#"{"q":0.5,"K":64,"family":{"kind":"position","gamma":0.5},"tasks":["position"]}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(dir.path());
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    let mut count = 0;
    for (task, rep) in s["tasks"].as_object().unwrap() {
        for (name, m) in rep["metrics"].as_object().unwrap() {
            let value = m["value"].as_f64().unwrap();
            let row = csv
                .lines()
                .find(|l| l.starts_with(&format!("{task},{name},")))
                .unwrap_or_else(|| panic!("{task}.{name} missing"));
            let parsed: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(parsed, value, "{task}.{name}");
            count += 1;
        }
    }
    assert_eq!(csv.lines().count(), count + 1);
    for f in ["position_phi.csv", "position_psi.csv"] {
        assert!(dir.path().join("out").join(f).exists());
    }
}

#[test]
fn subcommands_run() {
    let out = dquon(&["beta", "--q", "0.5", "--n-max", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("n,beta_sq,beta,beta_factorial"));
    assert_eq!(text.lines().count(), 5);

    let out = dquon(&["theta", "--q", "0.3", "--k", "48", "--alpha", "0.5,-0.25"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let dir = tempfile::tempdir().unwrap();
    let out = dquon(&["resolution", "--family", "identity", "--pairs", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let quad = std::fs::read_to_string(dir.path().join("quadrature.csv")).unwrap();
    assert!(quad.starts_with("r,w"));

    let out = dquon(&["selftest", "--only", "12"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[pass] criterion 12"));
}
