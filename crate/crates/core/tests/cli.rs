use std::path::Path;
use std::process::{Command, Output};

use hmpomdp::io::{parse_model, CSV_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_hmpomdp");
const MODEL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models/obstacles_3x.model");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{out}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn solve_to(dir: &Path) -> Output {
    run(&[
        "solve",
        "--model",
        MODEL,
        "--nodes",
        "2",
        "--max-iterations",
        "20",
        "--clock",
        "tick:0.001",
        "--out-csv",
        p(&dir.join("run.csv")),
        "--out-policy",
        p(&dir.join("policy.json")),
        "--out-summary",
        p(&dir.join("summary.json")),
    ])
}

#[test]
fn solve_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve_to(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let value: f64 = field(&text, "robust_value").parse().unwrap();
    assert!(value.is_finite() && value > 0.0);
    assert_eq!(field(&text, "iterations"), "20");
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(csv.lines().count(), 21);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn eval_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    assert!(solve_to(dir.path()).status.success());
    let policy = dir.path().join("policy.json");
    let ar = stdout(&run(&[
        "eval",
        "--model",
        MODEL,
        "--policy",
        p(&policy),
        "--eval",
        "ar",
    ]));
    let en = stdout(&run(&[
        "eval",
        "--model",
        MODEL,
        "--policy",
        p(&policy),
        "--eval",
        "enum",
    ]));
    let a: f64 = field(&ar, "robust_value").parse().unwrap();
    let e: f64 = field(&en, "robust_value").parse().unwrap();
    assert!((a - e).abs() <= 1e-9, "{a} vs {e}");

    let worst = field(&en, "worst_index");
    let single = stdout(&run(&[
        "eval",
        "--model",
        MODEL,
        "--policy",
        p(&policy),
        "--index",
        &worst,
    ]));
    let v: f64 = field(&single, "value").parse().unwrap();
    assert!((v - e).abs() <= 1e-9, "{v} vs {e}");
}

#[test]
fn bench_generators_write_valid_models() {
    let dir = tempfile::tempdir().unwrap();
    let obstacles = dir.path().join("o.model");
    let out = run(&["bench", "obstacles", "--out", p(&obstacles), "--three-locations"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&obstacles).unwrap(),
        std::fs::read_to_string(MODEL).unwrap()
    );

    let synthetic = dir.path().join("s.model");
    let out = run(&[
        "bench",
        "synthetic",
        "--out",
        p(&synthetic),
        "--holes",
        "3,2",
        "--states",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(parse_model(&synthetic).unwrap().instance_count(), 6);
    let v = run(&["validate", "--model", p(&synthetic)]);
    assert_eq!(stdout(&v).trim(), "ok: 6 states, 2 holes, 6 instances");
}

#[test]
fn baseline_reports_subset_and_full_values() {
    let out = run(&[
        "baseline",
        "--kind",
        "union",
        "--model",
        MODEL,
        "--nodes",
        "2",
        "--max-iterations",
        "5",
        "--subset-size",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let subset: f64 = field(&text, "subset_value").parse().unwrap();
    let full: f64 = field(&text, "robust_value").parse().unwrap();
    // Minimization: the full family can only be worse than a subset.
    assert!(full >= subset - 1e-9, "{full} < {subset}");
}

#[test]
fn malformed_model_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "[meta\nname = ").unwrap();
    let out = run(&["validate", "--model", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let out = run(&["solve", "--model", MODEL, "--clock", "sundial"]);
    assert_eq!(out.status.code(), Some(1));
}
