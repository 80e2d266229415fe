use std::process::{Command, Output};

use serde_json::Value;

fn leafcalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leafcalc"))
        .args(args)
        .output()
        .expect("spawn leafcalc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

fn metric<'a>(check: &'a Value, name: &str) -> &'a Value {
    check["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == name)
        .map(|m| &m["value"])
        .unwrap()
}

#[test]
fn lists_bundled_scenarios() {
    let o = leafcalc(&["scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["so3", "flat-torus", "empty", "parametrix", "bisubmersion"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn empty_pipeline_passes() {
    let o = leafcalc(&["report", "--scenario", "empty", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["scenario"], "empty");
    assert!(r["checks"].as_array().unwrap().is_empty());
}

#[test]
fn rotation_scenario_reports_fibers_and_positivity() {
    let o = leafcalc(&["report", "--scenario", "so3", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    let fibers = check(&r, "fibers");
    assert_eq!(metric(fibers, "fiber-dimensions")[0], 3);
    assert_eq!(metric(fibers, "fiber-dimensions")[1], 2);
    assert_eq!(check(&r, "laplacian")["passed"], true);
}

#[test]
fn flat_torus_tables_pass() {
    let o = leafcalc(&["report", "--scenario", "flat-torus", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    for name in ["parametrix", "sqrt", "laplacian"] {
        let c = check(&r, name);
        assert_eq!(c["passed"], true, "{name}");
        assert!(!c["series"].as_array().unwrap().is_empty() || name == "laplacian");
    }
}

#[test]
fn subcommand_selects_stages() {
    let o = leafcalc(&["fibers", "--scenario", "so3", "--json"]);
    assert!(o.status.success());
    let names: Vec<String> = json(&o)["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(names, ["fibers"]);
}

#[test]
fn reports_are_deterministic() {
    let a = leafcalc(&["parametrix", "--scenario", "idempotent", "--json", "--seed", "11"]);
    let b = leafcalc(&["parametrix", "--scenario", "idempotent", "--json", "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_dir_receives_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = leafcalc(&["parametrix", "--scenario", "flat-torus", "--out", out]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("checks passed"));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("[PASS] parametrix"));
    let csv = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("abscissa,value,series"));
    assert!(lines.any(|l| l.ends_with("parametrix/left")));
}

#[test]
fn grid_override_is_applied() {
    let o = leafcalc(&["laplacian", "--scenario", "flat-torus", "--grid", "16", "--json"]);
    assert!(o.status.success());
    assert_eq!(metric(check(&json(&o), "laplacian"), "size"), 16);
}

#[test]
fn failing_check_sets_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "id = \"wrong\"\ngenerators = [[\"1\"]]\n\n[domain]\nkind = \"torus\"\ndim = 1\n\n[[pipeline]]\ncheck = \"fibers\"\npoints = [[0.0]]\nfiber = [2]\n",
    )
    .unwrap();
    let o = leafcalc(&["report", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] fibers"));
}

#[test]
fn parse_errors_set_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "id = \"broken\"\n[[pipeline]]\ncheck = \"no-such-check\"\n").unwrap();
    let o = leafcalc(&["report", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_source_is_a_usage_error() {
    let o = leafcalc(&["report"]);
    assert_eq!(o.status.code(), Some(2));
    let o = leafcalc(&["report", "--scenario", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
