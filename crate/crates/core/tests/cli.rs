//! End-to-end runs of the `acfront` binary on desk-sized configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_SOLVE: &str = "
[solve]
max_steps = 200
[solve.grid]
y_max = 40.0
nx = 32
ny = 128
";

const SMALL_BALANCED_REPORT: &str = "
[report]
skew = 0.0
case_one = false
[report.balanced.solve]
max_steps = 4000
[report.balanced.solve.grid]
nx = 64
ny = 256
";

const SMALL_UNBALANCED_REPORT: &str = "
[potential]
kind = \"tilted-quartic\"
a = 0.3
[report.unbalanced.solve.grid]
x_min = -20.0
x_max = 20.0
y_min = -8.0
y_max = 20.0
nx = 129
ny = 113
";

fn acfront(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_acfront"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("binary runs")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status, String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = acfront(dir.path(), "[potential]\nkind = \"quartic\"\n", &["validate"]);
    assert_ok(&out);
    let report = read_json(dir.path().join("out/validate/validation.json"));
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    let summary = read_json(dir.path().join("out/validate/summary.json"));
    assert!((summary["beta"].as_f64().unwrap() - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
    assert!(fs::read_to_string(dir.path().join("out/validate/summary.txt")).unwrap().contains("pass = true"));
}

#[test]
fn unknown_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = acfront(dir.path(), "[potential]\nkind = \"sextic\"\n", &["validate"]);
    assert!(!out.status.success());
    let err = read_json(dir.path().join("out/error.json"));
    assert_eq!(err["stage"], "config");
    assert!(err["error"].as_str().unwrap().contains("sextic"));
}

#[test]
fn malformed_and_mismatched_configs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = acfront(dir.path(), "[solve]\nbogus = 1\n", &["solve"]);
    assert!(!out.status.success());
    assert_eq!(read_json(dir.path().join("out/error.json"))["stage"], "config");
    let out = acfront(dir.path(), "task = \"layerdyn\"\n", &["validate"]);
    assert!(!out.status.success());
}

#[test]
fn tabulated_potential_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("u,F\n");
    for k in 0..=400 {
        let u = -1.2 + 2.4 * k as f64 / 400.0;
        table += &format!("{u},{}\n", (1.0 - u * u).powi(2) / 4.0);
    }
    fs::write(dir.path().join("quartic.csv"), table).unwrap();
    let out = acfront(dir.path(), "[potential]\nkind = \"tabulated\"\ntable = \"quartic.csv\"\n", &["validate"]);
    assert_ok(&out);
    let summary = read_json(dir.path().join("out/validate/summary.json"));
    assert!((summary["beta"].as_f64().unwrap() - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-4);
    let out = acfront(dir.path(), "[potential]\nkind = \"tabulated\"\ntable = \"missing.csv\"\n", &["validate"]);
    assert!(!out.status.success());
}

#[test]
fn csv_artifacts_are_bit_identical_across_runs_and_threads() {
    let config = format!("{SMALL_SOLVE}\n[energy]\nsamples = 9\n");
    let runs: Vec<tempfile::TempDir> = ["1", "4", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            for task in ["solve", "energy"] {
                assert_ok(&acfront(dir.path(), &config, &[task, "--threads", threads]));
            }
            dir
        })
        .collect();
    for file in ["solve2d/field.csv", "solve2d/convergence.csv", "energy-curve/energy.csv", "energy-curve/slope_check.csv"] {
        let bytes: Vec<Vec<u8>> = runs.iter().map(|d| fs::read(d.path().join("out").join(file)).unwrap()).collect();
        assert!(!bytes[0].is_empty());
        assert!(bytes.iter().all(|b| *b == bytes[0]), "{file} differs");
    }
}

#[test]
fn levels_and_diagnose_consume_the_solved_field() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&acfront(dir.path(), SMALL_SOLVE, &["solve"]));
    assert_ok(&acfront(dir.path(), SMALL_SOLVE, &["levels"]));
    let levels = read_json(dir.path().join("out/levelset/summary.json"));
    assert!(levels["polylines"].as_u64().unwrap() >= 1);
    assert!(dir.path().join("out/levelset/k2.csv").is_file());
    assert_ok(&acfront(dir.path(), SMALL_SOLVE, &["diagnose"]));
    let diag = read_json(dir.path().join("out/diagnose/summary.json"));
    for key in ["hamiltonian_residual", "flux_residual", "gradient", "limits", "speed_bounds", "mu1", "mu2"] {
        assert!(!diag[key].is_null(), "missing {key}");
    }
    let rho = fs::read_to_string(dir.path().join("out/diagnose/rho.csv")).unwrap();
    assert_eq!(rho.lines().count(), 129);
}

#[test]
fn diagnose_without_a_field_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = acfront(dir.path(), "", &["diagnose"]);
    assert!(!out.status.success());
    let err = read_json(dir.path().join("out/error.json"));
    assert!(err["error"].as_str().unwrap().contains("field.csv"));
}

#[test]
fn profile_and_layer_tasks_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&acfront(dir.path(), "", &["profile1d"]));
    let profile = fs::read_to_string(dir.path().join("out/profile1d/profile.csv")).unwrap();
    assert!(profile.starts_with("s,u,u_prime\n"));
    assert_ok(&acfront(dir.path(), "[layerdyn]\na_eff = 16.955\n", &["layerdyn"]));
    let summary = read_json(dir.path().join("out/layerdyn/summary.json"));
    assert!(summary["tail_deviation"].as_f64().unwrap() <= 1e-3);
    assert!(dir.path().join("out/layerdyn/trajectory.csv").is_file());
}

#[test]
fn balanced_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&acfront(dir.path(), SMALL_BALANCED_REPORT, &["report"]));
    let summary = read_json(dir.path().join("out/full-report/summary.json"));
    for key in ["beta", "A_eff", "C1", "C2", "hamiltonian_residual", "symmetry_residual", "gradient_excess"] {
        assert!(summary[key].is_number(), "missing {key}");
    }
    for id in ["3", "4", "5", "6", "7", "8", "10", "11", "13", "14"] {
        assert!(!summary["criteria"][id].is_null(), "missing criterion {id}");
    }
    assert!(dir.path().join("out/full-report/field.csv").is_file());
}

#[test]
fn unbalanced_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&acfront(dir.path(), SMALL_UNBALANCED_REPORT, &["report"]));
    let summary = read_json(dir.path().join("out/full-report/summary.json"));
    for key in ["c0", "slope_fit", "planar_drift"] {
        assert!(summary[key].is_number(), "missing {key}");
    }
    assert!((summary["c0"].as_f64().unwrap() - 0.3 * 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn report_with_a_bad_time_step_names_the_solve_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_BALANCED_REPORT}\n[report.balanced.solve]\ndt = 0.9\n").replace(
        "[report.balanced.solve]\nmax_steps = 4000\n",
        "",
    );
    let out = acfront(dir.path(), &config, &["report"]);
    assert!(!out.status.success());
    let err = read_json(dir.path().join("out/error.json"));
    assert_eq!(err["stage"], "solve2d");
    assert_eq!(err["task"], "full-report");
}
