//! End-to-end tests for the `txflow` binary: exit codes, output
//! formats, and flag plumbing.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_txflow"))
}

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn solve_two_bus_converges_with_exit_zero() {
    let out = bin()
        .args(["solve", case("two_bus.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["format"], 1);
    assert_eq!(doc["status"], "Converged");
    assert_eq!(doc["class"], "HighVoltage");
    let vm = doc["buses"][1]["vm"].as_f64().unwrap();
    assert!((vm - 0.99995).abs() < 1e-4, "vm = {vm}");
}

#[test]
fn solve_accepts_a_polar_initial_point() {
    let out = bin()
        .args([
            "solve",
            case("two_bus.json").to_str().unwrap(),
            "--method",
            "tx",
            "--init-mag",
            "0.6",
            "--init-ang",
            "50",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["method"], "tx");
    assert_eq!(doc["used_trivial_start"], false);
}

#[test]
fn missing_file_exits_one() {
    let out = bin()
        .args(["solve", "no_such_case.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_matpower_exits_one() {
    let path = tmp("malformed.m");
    std::fs::write(&path, "function mpc = bad\nmpc.baseMVA = 100;\n").unwrap();
    let out = bin().args(["solve", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_case_exits_two() {
    let path = tmp("bad_format.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(case("two_bus.json")).unwrap()).unwrap();
    doc["format"] = serde_json::json!(2);
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = bin().args(["solve", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_drop_gen_bus_exits_two() {
    let out = bin()
        .args([
            "solve",
            case("two_bus.json").to_str().unwrap(),
            "--drop-gen",
            "99",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_case_exits_three() {
    // 10 pu through x = 0.1 is far beyond the line's transfer limit, so
    // no power-flow solution exists and the solver cannot converge.
    let path = tmp("infeasible.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(case("two_bus.json")).unwrap()).unwrap();
    doc["loads"][0]["p_l"] = serde_json::json!(10.0);
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = bin()
        .args([
            "solve",
            path.to_str().unwrap(),
            "--method",
            "plain-nr",
            "--max-iter",
            "15",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_writes_solution_and_traces_to_files() {
    let sol = tmp("sol.json");
    let stages = tmp("stages.csv");
    let iters = tmp("iters.csv");
    let out = bin()
        .args([
            "solve",
            case("two_bus.json").to_str().unwrap(),
            "--out",
            sol.to_str().unwrap(),
            "--trace-stages",
            stages.to_str().unwrap(),
            "--trace-iters",
            iters.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(doc["format"], 1);
    let stage_text = std::fs::read_to_string(&stages).unwrap();
    assert!(stage_text.starts_with("stage,lambda,iterations,status,max_residual\n"));
    let iter_text = std::fs::read_to_string(&iters).unwrap();
    assert!(iter_text.starts_with("iteration,lambda,zeta,max_dx,residual_inf\n"));
}

#[test]
fn sweep_emits_the_pinned_csv_header() {
    let out = bin()
        .args([
            "sweep",
            case("two_bus.json").to_str().unwrap(),
            "--grid",
            "2x2",
            "--mag-range",
            "0.9:1.0",
            "--ang-range",
            "-10:10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "v_mag,v_ang_deg,status,iters,ms");
    assert_eq!(lines.len(), 1 + 4 + 1, "{text}");
    assert!(lines[5].starts_with("# summary:"));
}

#[test]
fn sweep_sample_requires_a_seed() {
    let out = bin()
        .args([
            "sweep",
            case("two_bus.json").to_str().unwrap(),
            "--sample",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeded_sample_sweeps_are_reproducible() {
    let run = || {
        let out = bin()
            .args([
                "sweep",
                case("two_bus.json").to_str().unwrap(),
                "--sample",
                "3",
                "--seed",
                "42",
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        // Strip the timing column (wall time may differ between runs);
        // the `# summary:` trailer has no commas and carries no timing.
        stdout(&out)
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn eq15_sweep_counts_points() {
    let out = bin()
        .args([
            "sweep",
            case("two_bus.json").to_str().unwrap(),
            "--eq15",
            "4",
            "--method",
            "plain-nr",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1 + 4 + 1);
}

#[test]
fn compare_without_inits_is_a_usage_error() {
    let out = bin()
        .args(["compare", case("two_bus.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_prints_table_and_csv() {
    let out = bin()
        .args([
            "compare",
            case("two_bus.json").to_str().unwrap(),
            "--init",
            "1.0:0",
            "--init",
            "0.71:45",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("plain-nr"), "{text}");
    assert!(
        text.contains("v_mag,v_ang_deg,plain_nr,plain_nr_iters,tx,tx_iters"),
        "{text}"
    );
}
