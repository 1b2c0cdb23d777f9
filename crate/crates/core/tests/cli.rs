use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neutral_supply::cli::NetworkFile;
use neutral_supply::model::Edge;
use neutral_supply::{LtiSystem, Mat, NetworkGraph, SystemId};
use serde_json::Value;
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neutral-supply")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn emitted_dcgrid(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("dcgrid.json");
    let out = bin(&["example", "dcgrid", "--emit", path_str(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

/// Three first-order systems in a stable directed ring.
fn ring_file() -> String {
    let sys = |prev: u32, next: u32| {
        LtiSystem::new(scalar(-1.0))
            .unwrap()
            .with_port(SystemId(prev), scalar(0.5), scalar(0.0), None)
            .unwrap()
            .with_port(SystemId(next), scalar(0.0), scalar(1.0), None)
            .unwrap()
    };
    let systems = BTreeMap::from([(SystemId(1), sys(3, 2)), (SystemId(2), sys(1, 3)), (SystemId(3), sys(2, 1))]);
    let edges = [(1, 2), (2, 3), (3, 1), (2, 1), (3, 2), (1, 3)]
        .into_iter()
        .map(|(s, d)| Edge { src: SystemId(s), dst: SystemId(d), dim: 1 })
        .collect();
    NetworkFile::from_network(&NetworkGraph::new(systems, edges).unwrap()).to_json()
}

#[test]
fn dcgrid_decomposition_is_deterministic_and_verifies() {
    let dir = TempDir::new().unwrap();
    let grid = emitted_dcgrid(&dir);
    let report = dir.path().join("report.json");
    let first = bin(&["decompose", path_str(&grid), "--use-cert", "--json", "--report", path_str(&report)]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let second = bin(&["decompose", path_str(&grid), "--use-cert", "--json"]);
    assert_eq!(stdout(&first), stdout(&second));

    let machine: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(machine["outcome"], "success");
    assert_eq!(machine["exit_code"], 0);

    // The report carries the network with its supplies and feeds straight back in.
    let verified = bin(&["verify", path_str(&report)]);
    assert_eq!(code(&verified), 0, "{}{}", stdout(&verified), stderr(&verified));
    assert!(stdout(&verified).contains("pass"));
}

#[test]
fn perturbed_supply_fails_verification() {
    let dir = TempDir::new().unwrap();
    let grid = emitted_dcgrid(&dir);
    let report = dir.path().join("report.json");
    assert_eq!(code(&bin(&["decompose", path_str(&grid), "--report", path_str(&report)])), 0);
    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let supplies = value["network"]["supplies"].as_array_mut().unwrap();
    let q = &mut supplies[0]["q"][0][0];
    *q = Value::from(q.as_f64().unwrap() * 1.01);
    let tampered = write(&dir, "tampered.json", &value.to_string());
    let out = bin(&["verify", path_str(&tampered)]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("fail"));
}

#[test]
fn robustness_of_every_dcgrid_link_and_system() {
    let dir = TempDir::new().unwrap();
    let grid = emitted_dcgrid(&dir);
    let out = bin(&["robustness", path_str(&grid), "--all", "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("\"conclusion\": false"), "{text}");
}

#[test]
fn malformed_input_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let broken = write(&dir, "broken.json", "{\"schema_version\": 1, \"systems\": [");
    assert_eq!(code(&bin(&["lyapunov", path_str(&broken)])), 2);
    let overflow =
        write(&dir, "overflow.json", r#"{"schema_version": 1, "systems": [{"id": 1, "a": [[1e999]], "ports": []}], "edges": []}"#);
    assert_eq!(code(&bin(&["lyapunov", path_str(&overflow)])), 2);
    let unknown = write(&dir, "unknown.json", r#"{"schema_version": 1, "systems": [], "edges": [], "extra": 0}"#);
    assert_eq!(code(&bin(&["lyapunov", path_str(&unknown)])), 2);
}

#[test]
fn undamped_oscillator_has_no_certificate() {
    let dir = TempDir::new().unwrap();
    let osc = write(&dir, "osc.json", r#"{"schema_version": 1, "systems": [{"id": 1, "a": [[0, 1], [-1, 0]], "ports": []}], "edges": []}"#);
    let c = code(&bin(&["lyapunov", path_str(&osc)]));
    assert!(c == 3 || c == 4, "exit {c}");
}

#[test]
fn cyclic_network_needs_grouping() {
    let dir = TempDir::new().unwrap();
    let ring = write(&dir, "ring.json", &ring_file());
    let out = bin(&["decompose", path_str(&ring), "--solve-cert"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("--group"), "{}", stderr(&out));
    let grouped = bin(&["decompose", path_str(&ring), "--solve-cert", "--group", "1,2|3"]);
    assert_eq!(code(&grouped), 0, "{}{}", stdout(&grouped), stderr(&grouped));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let grid = emitted_dcgrid(&dir);
    assert_eq!(code(&bin(&["robustness", path_str(&grid), "--edge", "1,9"])), 1);
    assert_eq!(code(&bin(&["robustness", path_str(&grid), "--system", "7"])), 1);
    assert_eq!(code(&bin(&["decompose", path_str(&grid), "--use-cert", "--solve-cert"])), 1);
    assert_eq!(code(&bin(&["lyapunov", "/nonexistent/network.json"])), 1);
    assert_eq!(code(&bin(&["frobnicate"])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
}

#[test]
fn in_process_runner_matches_the_binary() {
    let dir = TempDir::new().unwrap();
    let grid = emitted_dcgrid(&dir);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let c = neutral_supply::cli::run(["neutral-supply", "lyapunov", path_str(&grid), "--json"], &mut out, &mut err);
    let binary = bin(&["lyapunov", path_str(&grid), "--json"]);
    assert_eq!(c, code(&binary));
    assert_eq!(String::from_utf8(out).unwrap(), stdout(&binary));
}
