use std::path::Path;
use std::process::{Command, Output};

fn courtesy(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_courtesy")).args(args).arg("--out").arg(out).output().unwrap()
}

fn summary_row(path: &Path, column: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = courtesy(&["simulate", "no_such_scenario"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn malformed_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = courtesy(&["sweep", "--scenario", "left_turn", "--lambda-grid", "1,-3"], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    let o = courtesy(&["simulate", "left_turn", "--set", "courtesy.lambda=abc"], &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "Vehicle_ID,Frame_ID\n1,1\n").unwrap();
    let o = courtesy(&["irl-fit", "--data", csv.to_str().unwrap()], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn selfish_simulation_merges_ahead() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = courtesy(&["simulate", "lane_change_slow", "--set", "courtesy.lambda=0"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "scenario.json", "summary.csv", "lane_change_slow_not_there_0.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(summary_row(&out.join("summary.csv"), "merge_order"), ["ahead"]);
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "left_turn", "--set", "duration=12", "--set", "courtesy.lambda=1000", "--mode", "collaborative", "--seed", "3"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(courtesy(&args, &a).status.success());
    assert!(courtesy(&args, &b).status.success());
    let name = "left_turn_collaborative_1000.csv";
    let log = std::fs::read(a.join(name)).unwrap_or_else(|_| panic!("{:?}", std::fs::read_dir(&a).unwrap().collect::<Vec<_>>()));
    assert_eq!(log, std::fs::read(b.join(name)).unwrap());
    assert_eq!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(b.join("summary.csv")).unwrap());
}
