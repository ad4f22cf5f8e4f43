use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use lbsoft_cli::{compare, run, ExperimentConfig, Mode, RunOptions};

const SMALL: &[&str] = &[
    "grid.levels=8",
    "grid.background=32",
    "snapshots.times=[0, 0.05, 0.1]",
    "model.horizon=0.1",
    "mc.particles=2000",
];

fn lbsoft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbsoft"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small(mode: Mode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for s in SMALL {
        cfg.apply_override(s).unwrap();
    }
    cfg.mode = mode;
    cfg
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .flatten()
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn dry_run_echo_reloads_to_the_same_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let first = lbsoft(&["run", "--dry-run", "--seed", "7", "--set", "model.n=1e3", "--set", "beta.atoms=[[pi/3, 0.5], [3*pi/8, 2]]"]);
    assert!(first.status.success());
    let path = tmp.path().join("echo.cfg");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = lbsoft(&["run", "--dry-run", "--config", path.to_str().unwrap()]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("seed = 7\n"));
    assert!(text.contains("model.n = 1000.0\n"));
}

#[test]
fn atom_at_zero_is_rejected_with_its_field() {
    let out = lbsoft(&["run", "--dry-run", "--set", "beta.atoms=[[0, 1]]"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta.atoms"));
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.cfg");
    std::fs::write(&path, "mode = det\nmodel.gama = -1.5\n").unwrap();
    let out = lbsoft(&["run", "--dry-run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("model.gama"), "{err}");
}

#[test]
fn oversized_step_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let mut args = vec!["run", "--no-cache", "--out", out_dir.to_str().unwrap(), "--set", "solver.dt=0.5"];
    for s in SMALL {
        args.extend(["--set", s]);
    }
    let out = lbsoft(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.dt"));
}

#[test]
fn quadrature_failure_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let mut args = vec![
        "run",
        "--no-cache",
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "quadrature.rel_tol=1e-15",
        "--set",
        "quadrature.max_subdivisions=16",
    ];
    for s in SMALL {
        args.extend(["--set", s]);
    }
    let out = lbsoft(&args);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn det_run_writes_the_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("det");
    let summary = run(&small(Mode::Det), &RunOptions::with_default_cache(out.clone(), None)).unwrap();
    let files = dir_bytes(&summary.out);
    for name in [
        "config.resolved",
        "trajectory.csv",
        "snapshot_t0.csv",
        "snapshot_t0.05.csv",
        "snapshot_t0.1.csv",
        "report.json",
        "curves.csv",
        "manifest.json",
    ] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&files["report.json"]).unwrap();
    for key in ["exponent_fits", "constants", "checks", "inputs_digest"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    for key in ["config", "grid", "beta", "generator"] {
        assert!(manifest["inputs"].get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn runs_are_byte_identical_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in [Mode::Det, Mode::Mc] {
        let cfg = small(mode);
        let dirs: Vec<_> = [1, 4, 8]
            .iter()
            .map(|&w| {
                let out = tmp.path().join(format!("{}_{w}", mode.as_str()));
                run(&cfg, &RunOptions { out: out.clone(), workers: Some(w), cache: None }).unwrap();
                dir_bytes(&out)
            })
            .collect();
        assert_eq!(dirs[0], dirs[1], "{} workers 1 vs 4", mode.as_str());
        assert_eq!(dirs[0], dirs[2], "{} workers 1 vs 8", mode.as_str());
    }
}

#[test]
fn rerun_from_echo_reproduces_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg = small(Mode::Mc);
    run(&cfg, &RunOptions::with_default_cache(a.clone(), None)).unwrap();
    let echo = std::fs::read_to_string(a.join("config.resolved")).unwrap();
    let again = ExperimentConfig::parse(&echo).unwrap();
    run(&again, &RunOptions::with_default_cache(b.clone(), None)).unwrap();
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn a_run_compared_to_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("det");
    run(&small(Mode::Det), &RunOptions::with_default_cache(out.clone(), None)).unwrap();
    let cmp = compare(&out, &out, None).unwrap();
    assert_eq!(cmp.rows.len(), 3);
    assert!(cmp.rows.iter().all(|r| r.w1 == 0.0 && r.atom_delta == 0.0));
    assert!(cmp.pass());

    let cli = lbsoft(&["compare", out.to_str().unwrap(), out.to_str().unwrap()]);
    assert!(cli.status.success());
}

#[test]
fn compare_rejects_different_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&small(Mode::Det), &RunOptions::with_default_cache(a.clone(), None)).unwrap();
    let mut cfg = small(Mode::Det);
    cfg.apply_override("grid.levels=6").unwrap();
    run(&cfg, &RunOptions::with_default_cache(b.clone(), None)).unwrap();
    let err = compare(&a, &b, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn monte_carlo_tracks_the_deterministic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let det = tmp.path().join("det");
    let mc = tmp.path().join("mc");
    run(&small(Mode::Det), &RunOptions::with_default_cache(det.clone(), None)).unwrap();
    run(&small(Mode::Mc), &RunOptions::with_default_cache(mc.clone(), None)).unwrap();
    let cmp = compare(&det, &mc, None).unwrap();
    assert!(cmp.pass(), "{}", cmp.to_csv());
}

#[test]
fn scan_reports_convergence_in_n() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scan");
    let mut cfg = small(Mode::Scan);
    cfg.apply_override("diagnostics.n_list=[100, 1000]").unwrap();
    run(&cfg, &RunOptions::with_default_cache(out.clone(), None)).unwrap();
    for name in ["scan.csv", "trajectory_n100.csv", "trajectory_n1000.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}
