//! End-to-end checks of the `fpphe` binary: outputs and exit codes.

use std::process::{Command, Output};

fn fpphe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpphe")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const CONSTANTS: &str = r#""constants":{"cin1":0.5,"cin2":0.5,"cinD":0.5,"cout1":2,"cout2":2,"coutD":2},"frak_c":10,"R":100"#;

const PLAN: &str = r#"{"graph":{"kind":"tile","tile":{"D":2,"L":2,"H":2,"R":2}},"mu":0.2,"lambda":0.5,
    "trials":300,"master_seed":3,"estimand":{"event":"type-is","vertex":"B","type":"FPP1"}}"#;

#[test]
fn gw_extinction_with_config() {
    let v = json(&fpphe(&["analytics", "gw", "--d", "2", "--mu", "0.25"]));
    assert!((v["extinction"].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-9);
    assert_eq!(v["config"]["d"], 2);
    assert_eq!(v["config"]["mu"], 0.25);
}

#[test]
fn tile_dot_lists_every_vertex() {
    let out = fpphe(&["graph", "--tile", "D=3,L=1,H=1,R=2", "--format", "dot"]);
    assert_eq!(code(&out), 0);
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("// config: "));
    let nodes = dot.lines().filter(|l| l.ends_with(';') && !l.contains("--")).count();
    assert_eq!(nodes, 12);
    assert!(dot.contains("label=\"W_low\""));
}

#[test]
fn feasibility_exit_codes() {
    let ok = json(&fpphe(&["feasibility", "--input", &format!(r#"{{"lambda":0.01,{CONSTANTS}}}"#)]));
    assert_eq!((ok["solution"]["H"].as_u64(), ok["solution"]["L"].as_u64()), (Some(4356), Some(57448)));

    let bad = fpphe(&["feasibility", "--input", &format!(r#"{{"lambda":0.5,{CONSTANTS}}}"#)]);
    assert_eq!(code(&bad), 2);
    // The report is still written so the failing inequalities can be read.
    let v: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(v["solution"]["feasible"], false);
}

#[test]
fn invalid_input_exits_one() {
    assert_eq!(code(&fpphe(&["bogus"])), 1);
    assert_eq!(code(&fpphe(&["simulate", "--tile", "D=2,L=1,H=1,R=1", "--mu", "0.2"])), 1);
    let zero = ["sweep", "--tile", "D=2,L=1,H=1,R=1", "--lambda", "0.5", "--mu", "0.1", "--trials", "0"];
    assert_eq!(code(&fpphe(&zero)), 1);
    assert_eq!(code(&fpphe(&["graph", "--tile", "D=1,L=1,H=1,R=1"])), 1);
}

#[test]
fn vertex_cap_exits_three() {
    let out = Command::new(env!("CARGO_BIN_EXE_fpphe"))
        .args(["graph", "--complete-tree", "2,5"])
        .env("FPPHE_VERTEX_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("63"));
}

#[test]
fn estimate_is_independent_of_workers() {
    let one = fpphe(&["estimate", "--plan", PLAN, "--workers", "1"]);
    let three = fpphe(&["estimate", "--plan", PLAN, "--workers", "3"]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, three.stdout);
    let v = json(&one);
    assert_eq!(v["trials"], 300);
    assert_eq!(v["metadata"]["plan"]["master_seed"], 3);
}

#[test]
fn estimate_csv_has_header() {
    let out = fpphe(&["estimate", "--plan", PLAN, "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu,lambda,estimand,p_hat,ci_low,ci_high,trials,successes,seed"));
    assert!(lines.next().unwrap().starts_with("0.2,0.5,type:B=FPP1,"));
}

#[test]
fn simulate_writes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let out = fpphe(&[
        "simulate", "--tile", "D=2,L=1,H=1,R=1", "--mu", "0.2", "--master-seed", "1", "--target", "B",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["config"]["master_seed"], 1);
}
