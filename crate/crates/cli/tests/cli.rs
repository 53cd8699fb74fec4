//! Drives the binary through generate, solve, verify, export and render.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsn-synth")).args(args).current_dir(dir).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("tsn-synth-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn round_trip() {
    let d = scratch("round-trip");
    let cfg = "[sa]\nmax_iterations = 300\n\n[testcase]\nn_es = 6\nn_sw = 3\nn_tasks = 6\n";
    std::fs::write(d.join("cfg.toml"), cfg).unwrap();
    let out = bin(&["--config", "cfg.toml", "--seed", "3", "gen", "-o", "m.toml"], &d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin(&["--config", "cfg.toml", "--seed", "3", "solve-sa", "m.toml", "-o", "s.toml", "--trace", "t.txt"], &d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(d.join("t.txt")).unwrap().lines().count() > 0);

    let out = bin(&["verify", "m.toml", "s.toml"], &d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("violations: 0"));

    let out = bin(&["export-gcl", "m.toml", "s.toml"], &d);
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());

    for target in ["gantt", "routes"] {
        let out = bin(&["render", "m.toml", "s.toml", "--target", target], &d);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("<svg"));
    }
    std::fs::remove_dir_all(&d).unwrap();
}

#[test]
fn tampered_solution_reports_findings() {
    let d = scratch("tampered");
    std::fs::write(d.join("cfg.toml"), "[sa]\nmax_iterations = 300\n").unwrap();
    assert!(bin(&["--seed", "5", "gen", "-o", "m.toml"], &d).status.success());
    assert!(bin(&["--config", "cfg.toml", "solve-sa", "m.toml", "-o", "s.toml"], &d).status.success());
    // move every task to offset 0
    let sol = std::fs::read_to_string(d.join("s.toml")).unwrap();
    let tampered: String = sol
        .lines()
        .map(|l| match l.split_once(" = ") {
            Some((k, _)) if k.trim() == "offset" => format!("{k} = 0\n"),
            _ => format!("{l}\n"),
        })
        .collect();
    assert_ne!(sol, tampered, "no task offsets found");
    std::fs::write(d.join("bad.toml"), tampered).unwrap();
    let out = bin(&["verify", "m.toml", "bad.toml"], &d);
    let code = out.status.code().unwrap();
    assert!((1..=125).contains(&code), "exit {code}");
    std::fs::remove_dir_all(&d).unwrap();
}

#[test]
fn bad_input_exits_126() {
    let d = scratch("bad-input");
    let out = bin(&["verify", "missing.toml", "missing.toml"], &d);
    assert_eq!(out.status.code(), Some(126));
    std::fs::write(d.join("cfg.toml"), "[nonsense]\n").unwrap();
    let out = bin(&["--config", "cfg.toml", "gen"], &d);
    assert_eq!(out.status.code(), Some(126));
    std::fs::remove_dir_all(&d).unwrap();
}
