//! Exit codes and artifacts of the `diatomic` binary.

use std::path::Path;
use std::process::{Command, Output};

fn diatomic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diatomic"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn bounds_prints_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("c.json"),
        r#"{
            "hooke": {"kind": "tangent", "epsilon": 1.0},
            "datum": {"kind": "bumps", "cells": [4, 4, 4, 4],
                      "bumps": [{"center": [0, 0, 0.5, 0], "width": [1, 0.5, 0.2, 0.5], "amplitude": 2}]},
            "horizon": 0.5
        }"#,
    );
    let out = diatomic(&["bounds", "--config", "c.json"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cert: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cert["epsilon"], 1.0);
    assert_eq!(cert["horizon"], 0.5);
    let (c, mass) = (cert["c"].as_f64().unwrap(), cert["mass"].as_f64().unwrap());
    assert!(c >= 1.5 * 2.0 * mass);
    assert!(cert["t0"].as_f64().unwrap() > 0.0);
}

#[test]
fn omega_support_touching_zero_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = diatomic(
        &[
            "simulate",
            "--set",
            r#"datum.bumps=[{"center":[0,0,0.2,0],"width":[1,1,0.2,1],"amplitude":1}]"#,
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("omega support") && msg.contains("strictly inside"),
        "{msg}"
    );
}

#[test]
fn unknown_keys_and_bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        diatomic(&["bounds", "--set", "horizn=1"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        diatomic(&["bounds", "--bogus"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(diatomic(&["--help"], dir.path()).status.code(), Some(0));
    write(
        &dir.path().join("c.json"),
        r#"{"hooke": {"kind": "tangent", "epsilon": 1.0, "extra": 3}}"#,
    );
    assert_eq!(
        diatomic(&["bounds", "--config", "c.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn step_underflow_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = diatomic(
        &[
            "trajectory",
            "--set",
            "trajectory.initial=[0,0,0.5,1e6]",
            "--set",
            "control.dt=0.1",
            "--set",
            "control.max_halvings=1",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("step underflow"));
}

#[test]
fn validate_hooke_flags_broken_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        diatomic(&["validate-hooke"], dir.path()).status.code(),
        Some(0)
    );
    let rows: String = (1..20)
        .map(|k| {
            let w = k as f64 / 20.0;
            format!("{w} {}\n", (w - 0.5) * (w - 0.5))
        })
        .collect();
    write(&dir.path().join("bad.txt"), &rows);
    let out = diatomic(
        &[
            "validate-hooke",
            "--set",
            r#"hooke={"kind":"table","epsilon":1.0,"path":"bad.txt"}"#,
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn edited_seed_report_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let out = diatomic(
        &[
            "simulate",
            "--seed-report",
            "--output",
            "run1",
            "--set",
            "horizon=0.3",
            "--set",
            "tracked_seeds=4",
            "--set",
            "datum.cells=[5,5,5,5]",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let seeds = dir.path().join("run1/seeds");
    for f in [
        "seed_000.csv",
        "seed_000_forces.csv",
        "seed_000_steps.csv",
        "seed_000_events.csv",
        "manifest.json",
    ] {
        assert!(seeds.join(f).exists(), "{f}");
    }
    assert_eq!(
        diatomic(&["certify", "--path", "run1/seeds"], dir.path())
            .status
            .code(),
        Some(0)
    );

    // push one bond rate far outside every envelope
    let file = seeds.join("seed_002.csv");
    let text = std::fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<&str> = lines[10].split(',').collect();
    let big = format!("{:.16e}", 1e3);
    cells[4] = &big;
    lines[10] = cells.join(",");
    write(&file, &(lines.join("\n") + "\n"));
    let out = diatomic(&["certify", "--path", "run1/seeds"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed_002"));
    assert_eq!(
        diatomic(
            &["certify", "--path", "run1/seeds", "--stem", "seed_001"],
            dir.path()
        )
        .status
        .code(),
        Some(0)
    );
}

#[test]
fn manifest_echoes_every_effective_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = diatomic(
        &[
            "simulate",
            "--output",
            "r",
            "--set",
            "horizon=0.05",
            "--set",
            "tracked_seeds=2",
            "--set",
            "datum.cells=[4,4,4,4]",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/manifest.json")).unwrap())
            .unwrap();
    let cfg = &m["config"];
    assert_eq!(cfg["horizon"], 0.05);
    assert_eq!(cfg["dt_macro"], 0.01);
    assert_eq!(cfg["control"]["max_halvings"], 10);
    assert_eq!(cfg["picard"]["n_max"], 8);
    assert!(m["version"].is_string());
    assert!(m["certificate"]["certified_box"].is_object());
    let diag = std::fs::read_to_string(dir.path().join("r/diagnostics.csv")).unwrap();
    assert_eq!(
        diag.lines().next().unwrap(),
        "t,L1,Linf,x_lo,x_hi,v_lo,v_hi,w_lo,w_hi,eta_lo,eta_hi,supF,E_kin,E_osc,detJ_err,status"
    );
    assert_eq!(diag.lines().count(), 7);
}

#[test]
fn picard_writes_the_iteration_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = diatomic(
        &[
            "picard",
            "--output",
            "p",
            "--set",
            "datum.cells=[5,5,5,5]",
            "--set",
            "picard.probes=256",
            "--set",
            "picard.n_max=4",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = std::fs::read_to_string(dir.path().join("p/iterations.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,sup_delta,Px,Pv,Pomega_minus,Pomega_plus,Peta,supF"
    );
    assert_eq!(lines.count(), 5);
}
