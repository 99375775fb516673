use std::fs;
use std::process::{Command, Output};

use tempfile::tempdir;

const EX1: [&str; 14] =
    ["--c1", "4", "--c2", "2", "--mu1", "3", "--mu2", "0.96", "--h0", "0.1", "--h1", "1", "--h2", "0.16"];

fn collabq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collabq")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_writes_both_tables() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["solve"];
    args.extend(EX1);
    args.extend(["--imax", "20", "--out", out]);
    let o = collabq(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let values = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    let diffs = fs::read_to_string(dir.path().join("diffs.csv")).unwrap();
    assert!(values.starts_with("i,k,l,value\n"));
    assert!(diffs.starts_with("i,k,l,D\n"));
    // 15 boundary states, empty one included, plus 20 levels of 5
    assert_eq!(values.lines().count(), 1 + 15 + 100);
}

#[test]
fn zero_depth_gives_boundary_only() {
    let dir = tempdir().unwrap();
    let mut args = vec!["solve", "--example", "ex1", "--imax", "0", "--out"];
    args.push(dir.path().to_str().unwrap());
    assert!(collabq(&args).status.success());
    let values = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    assert!(values.lines().skip(1).all(|row| row.starts_with("0,")));
}

#[test]
fn missing_parameter_is_a_usage_error() {
    let o = collabq(&["solve", "--c1", "4", "--c2", "2", "--mu1", "3", "--mu2", "0.96", "--h0", "0.1", "--h1", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--h2"));
    assert_eq!(collabq(&["solve", "--bogus"]).status.code(), Some(2));
}

#[test]
fn thresholds_rows() {
    let o = collabq(&["thresholds", "--example", "ex3b"]);
    assert!(stdout(&o).lines().any(|l| l == "k=2,actual=13,heuristic=13,cond1=HoldsQueueSide"));

    let mut args = vec!["thresholds"];
    args.extend(EX1);
    assert!(stdout(&collabq(&args)).contains("k=3,actual=10,heuristic=10,"));

    // collaborative service costlier and mu1 >= mu2: nothing finite
    let o = collabq(&["thresholds", "--c1", "3", "--c2", "2", "--mu1", "5", "--mu2", "4", "--h0", "1", "--h1", "1", "--h2", "2"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.contains("actual=inf,heuristic=inf")));
}

#[test]
fn single_server_thresholds_agree() {
    for (mu2, h2) in [("0.5", "0.2"), ("3", "0.4"), ("2", "5")] {
        let o = collabq(&["thresholds", "--c1", "1", "--c2", "1", "--mu1", "1", "--mu2", mu2, "--h0", "0.3", "--h1", "1", "--h2", h2]);
        assert!(o.status.success());
        for line in stdout(&o).lines() {
            let f: Vec<&str> = line.split(',').collect();
            if !f[1].ends_with("inf") && !f[2].ends_with("inf") {
                assert_eq!(f[1].trim_start_matches("actual="), f[2].trim_start_matches("heuristic="), "{line}");
            }
        }
    }
}

#[test]
fn thresholds_csv_output() {
    let dir = tempdir().unwrap();
    let o = collabq(&["thresholds", "--example", "ex8", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("l=0,actual=8,heuristic=5,"));
    let csv = fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert!(csv.starts_with("index,kind,orientation,threshold\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"C1": 4, "C2": 2, "mu1": 1, "mu2": 1.5, "h0": 2, "h1": 2, "h2": 1}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = collabq(&["thresholds", "--config", cfg]);
    assert!(stdout(&o).contains("k=2,actual=3,heuristic=4,"));
    let o = collabq(&["thresholds", "--config", cfg, "--h1", "8"]);
    assert!(stdout(&o).contains("k=2,actual=13,heuristic=13,"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"C1": 4, "colour": "red"}"#).unwrap();
    let o = collabq(&["thresholds", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn sweep_reproduces_table_layout() {
    let dir = tempdir().unwrap();
    let o = collabq(&["sweep", "--table", "9", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("sweep_table.csv")).unwrap();
    assert_eq!(stdout(&o), table);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("policy,i0,statistic,2/1,3/1,3/2,4/1,4/2,4/3"));
    assert_eq!(lines.next(), Some("heuristic,20,max,0.05,0.07,0.19,0.09,0.21,0.38"));
    assert_eq!(table.lines().count(), 1 + 5 * 3);
    let raw = fs::read_to_string(dir.path().join("sweep_raw.csv")).unwrap();
    assert!(raw.starts_with("C1,C2,h0,h1,h2,mu1,mu2,i0,k0,l0,policy,v_opt,v_pi,err_pct\n"));
    assert_eq!(collabq(&["sweep", "--table", "4"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_across_worker_counts() {
    let run = |jobs: &str| {
        let o = collabq(&["--jobs", jobs, "simulate", "--example", "ex2", "--policy", "heuristic", "--i0", "5", "--reps", "3000", "--seed", "11"]);
        assert!(o.status.success());
        stdout(&o)
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    let est: serde_json::Value = serde_json::from_str(&one).unwrap();
    assert_eq!(est["replications"], 3000);
    assert!(est["std_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_rejects_bad_inputs() {
    assert_eq!(collabq(&["simulate", "--example", "ex1", "--policy", "pi9", "--reps", "10"]).status.code(), Some(2));
    assert_eq!(collabq(&["simulate", "--example", "ex1", "--i0", "3", "--k0", "1", "--l0", "1"]).status.code(), Some(2));
}

#[test]
fn verify_reports_and_exits_zero() {
    let dir = tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = collabq(&["verify", "--grid", "examples", "--imax", "20", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["points"], 9);
}

#[test]
fn curve_csv() {
    let o = collabq(&["curve", "--example", "ex2", "--index", "4", "--imax", "6"]);
    let text = stdout(&o);
    assert!(text.starts_with("i,D,H\n"));
    assert_eq!(text.lines().count(), 1 + 7);
    assert_eq!(collabq(&["curve", "--example", "ex2", "--index", "9"]).status.code(), Some(2));
}
