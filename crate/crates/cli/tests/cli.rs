use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rtm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtm"))
        .args(args)
        .output()
        .expect("run rtm")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn population_writes_the_sweep_table() {
    let out = rtm(&["population", "--betas", "0,-0.5", "--ratios", "0:1:0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta,noise_ratio,crude_slope,berry_slope,rho");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("0,0,0,"));
}

#[test]
fn simulate_dump_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("sample.csv");
    let sim = dir.path().join("sim.json");
    let out = rtm(&[
        "simulate",
        "--n",
        "100",
        "--seed",
        "3",
        "--dump",
        path_str(&dump),
        "--out",
        path_str(&sim),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&dump).unwrap().starts_with("x1,x2\n"));

    let report = dir.path().join("report.json");
    let out = rtm(&[
        "analyze",
        "--data",
        path_str(&dump),
        "--boot",
        "500",
        "--n-perm",
        "199",
        "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&sim)["slopes"]["crude"]["value"].as_f64().unwrap();
    let b = json(&report)["slopes"]["crude"]["value"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let reps = dir.path().join(format!("{name}.reps.csv"));
        let o = rtm(&[
            "boot-demo",
            "--n",
            "80",
            "--boot",
            "300",
            "--seed",
            "5",
            "--out",
            path_str(&out),
            "--replicates-out",
            path_str(&reps),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out).unwrap(), fs::read(reps).unwrap())
    };
    let (a, ra) = run("a.json");
    let (b, rb) = run("b.json");
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(String::from_utf8(ra).unwrap().starts_with("slope\n"));

    let h2h = |fmt: &str| {
        rtm(&[
            "head-to-head",
            "--betas",
            "0,-1",
            "--reps",
            "1000",
            "--seed",
            "2",
            "--format",
            fmt,
        ])
    };
    assert_eq!(h2h("csv").stdout, h2h("csv").stdout);
    let csv = String::from_utf8(h2h("csv").stdout).unwrap();
    assert!(csv.starts_with("beta,p_crude_beats_berry,p_crude_beats_blomqvist,n_valid\n"));
    assert_eq!(h2h("json").stdout, h2h("json").stdout);
}

#[test]
fn analyze_with_error_spec_adds_blomqvist_and_adjusted_change() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("sample.csv");
    assert_eq!(
        code(&rtm(&["simulate", "--n", "60", "--dump", path_str(&dump)])),
        0
    );
    let adj = dir.path().join("adj.csv");
    let report = dir.path().join("r.json");
    let out = rtm(&[
        "analyze",
        "--data",
        path_str(&dump),
        "--boot",
        "200",
        "--n-perm",
        "99",
        "--repeatability",
        "0.69",
        "--adjusted-method",
        "blomqvist",
        "--adjusted-out",
        path_str(&adj),
        "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&report);
    assert!(v["slopes"]["blomqvist"]["value"].is_f64());
    assert!(v["bootstrap"]["blomqvist"]["ci_low"].is_f64());
    assert!(v["tests"]["null_given_r"]["rejected"].is_boolean());
    let adj = fs::read_to_string(adj).unwrap();
    assert!(adj.starts_with("d_adj\n"));
    assert_eq!(adj.lines().count(), 61);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&rtm(&[])), 1);
    assert_eq!(code(&rtm(&["frobnicate"])), 1);
    assert_eq!(code(&rtm(&["simulate", "--n", "many"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("sample.csv");
    assert_eq!(
        code(&rtm(&["simulate", "--n", "30", "--dump", path_str(&dump)])),
        0
    );
    let both = rtm(&[
        "analyze",
        "--data",
        path_str(&dump),
        "--repeatability",
        "0.7",
        "--error-var",
        "80",
    ]);
    assert_eq!(code(&both), 1);
    assert_eq!(code(&rtm(&["--help"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = rtm(&["analyze", "--data", path_str(&missing)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,x2\n1,2\n3,oops\n4,5\n").unwrap();
    let out = rtm(&["analyze", "--data", path_str(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn singular_error_variance_exits_with_three_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("sample.csv");
    assert_eq!(
        code(&rtm(&["simulate", "--n", "50", "--dump", path_str(&dump)])),
        0
    );
    let report = dir.path().join("r.json");
    let out = rtm(&[
        "analyze",
        "--data",
        path_str(&dump),
        "--boot",
        "200",
        "--n-perm",
        "99",
        "--error-var",
        "1e9",
        "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!report.exists());
}
