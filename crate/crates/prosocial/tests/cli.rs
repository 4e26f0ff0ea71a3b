use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prosocial::config::ExperimentConfig;
use prosocial::output::{read_results, RESULT_HEADER};

fn prosocial(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosocial"))
        .args(args)
        .current_dir(dir)
        .env("PROSOCIAL_WORKERS", "2")
        .output()
        .unwrap()
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_results_summary_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prosocial(
        &["run", "matrix", "--set", "replicates=4", "--set", "length=60", "--set", "game.penalty=3", "--out", "a"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("a");
    let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), RESULT_HEADER.join(","));
    let rows = read_results(csv.as_bytes()).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 2);
    assert!(rows.iter().all(|r| r.condition == "alpha=0/0"));
    assert!(dir.join("summary.csv").exists());

    let resolved = ExperimentConfig::load(&dir.join("config.resolved.toml"), &[]).unwrap();
    assert_eq!(resolved.replicates(), 4);
    assert_eq!(resolved.game.risk(), 3.0);
    let again = prosocial(
        &["run", "matrix", "--config", "a/config.resolved.toml", "--out", "b"],
        tmp.path(),
    );
    assert!(again.status.success());
    assert_eq!(fs::read(tmp.path().join("b/results.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn report_matches_the_run_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prosocial(&["run", "network", "--set", "replicates=3", "--set", "length=50", "--out", "n"], tmp.path());
    assert!(out.status.success());
    let report = prosocial(&["report", "n/results.csv"], tmp.path());
    assert!(report.status.success());
    assert!(text(&report).contains("agent 4"));
    assert_eq!(
        fs::read(tmp.path().join("n/results_summary.csv")).unwrap(),
        fs::read(tmp.path().join("n/summary.csv")).unwrap()
    );
}

#[test]
fn sweep_labels_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("sweep.toml"),
        "risks = [1.0, 4.0]\nassignments = [\"none\", \"single\"]\n\n[base]\nexperiment_id = \"s\"\nreplicates = 2\nlength = 40\n\n[base.game]\nkind = \"matrix\"\n",
    )
    .unwrap();
    let out = prosocial(&["sweep", "sweep.toml"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_results(fs::File::open(tmp.path().join("results/s/results.csv")).unwrap()).unwrap();
    let mut conditions: Vec<&str> = rows.iter().map(|r| r.condition.as_str()).collect();
    conditions.dedup();
    assert_eq!(conditions, ["none g=1", "single g=1", "none g=4", "single g=4"]);
}

#[test]
fn analyze_prints_thresholds_and_basins() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prosocial(&["analyze", "--g", "-3", "--resolution", "11", "--basins", "b.csv"], tmp.path());
    assert!(out.status.success());
    let stdout = text(&out);
    assert!(stdout.contains("p*: 0.8\n"));
    assert!(stdout.contains("alpha*: 1\n"));
    let basins = fs::read_to_string(tmp.path().join("b.csv")).unwrap();
    assert_eq!(basins.lines().count(), 26);
    assert_eq!(basins.lines().next().unwrap(), "alpha1,alpha2,g,fraction_hunt,unresolved");

    fs::write(tmp.path().join("g.txt"), "4 0 0\n3 2 -1\n1 1 1\n").unwrap();
    let out = prosocial(&["analyze", "--matrix", "g.txt"], tmp.path());
    assert!(out.status.success());
    assert!(text(&out).contains("every 2x2 subgame is a Stag Hunt"));
}

#[test]
fn failures_set_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let nan = prosocial(&["run", "matrix", "--set", "learner.lr=nan", "--set", "replicates=2", "--out", "x"], tmp.path());
    assert_eq!(nan.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&nan.stderr).contains("replicate 1 (seed 1) failed"));
    let bad = prosocial(&["run", "matrix", "--set", "game.h=oops"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    fs::write(tmp.path().join("m.toml"), "[game]\nkind = \"matrix\"\n").unwrap();
    let wrong = prosocial(&["run", "weaklink", "--config", "m.toml"], tmp.path());
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("not weaklink"));
}
