use flandau_core::diagnostics::COLUMNS;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
threads = 1
[grid]
dx = 1
dv = 2
nx = 4
nv = 8
lx = 2.0
lv = 4.0
[model]
gamma = -1.0
[scheme]
dt = 0.002
t_end = 0.01
snapshot_every = 2
[initial]
kind = "two_bump"
centers = [[-0.3, 0.0, 0.0], [0.3, 0.0, 0.0]]
weights = [0.5, 0.5]
profile = "cosine"
amplitude = 0.3
mass = 0.05
[output]
dir = "out"
"#;

const FAITHFUL: &str = r#"
threads = 1
[grid]
dx = 1
dv = 2
nx = 4
nv = 8
lx = 2.0
lv = 4.0
[model]
gamma = -1.0
delta = 0.1
epsilon = 0.05
tau = 0.005
[scheme]
mode = "faithful_implicit"
t_end = 0.01
[initial]
kind = "maxwellian"
temperature = 0.5
profile = "cosine"
amplitude = 0.3
[output]
dir = "out"
"#;

fn flandau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flandau")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_config_error_naming_the_path() {
    let out = flandau(&["run", "/nonexistent/flandau.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/flandau.toml"));
}

#[test]
fn run_writes_diagnostics_with_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = flandau(&["run", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    assert_eq!(lines.count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/run.json")).unwrap()).unwrap();
    assert!(json.is_object());
    assert!(dir.path().join("out/snapshot_00000.fld").exists());
}

#[test]
fn zero_end_time_gives_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("t_end = 0.01", "t_end = 0.0"));
    assert_eq!(flandau(&["run", arg(&cfg)]).status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let read = |name: &str| std::fs::read(dir.path().join("out").join(name)).unwrap();
    assert_eq!(flandau(&["run", arg(&cfg)]).status.code(), Some(0));
    let (json, csv) = (read("run.json"), read("diagnostics.csv"));
    assert_eq!(flandau(&["run", arg(&cfg)]).status.code(), Some(0));
    assert_eq!(json, read("run.json"));
    assert_eq!(csv, read("diagnostics.csv"));
}

#[test]
fn invalid_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("dx = 1", "dx = 3"));
    assert_eq!(flandau(&["run", arg(&cfg)]).status.code(), Some(2));
}

#[test]
fn cfl_violation_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("dt = 0.002", "dt = 0.5").replace("t_end = 0.01", "t_end = 1.0"));
    assert_eq!(flandau(&["run", arg(&cfg)]).status.code(), Some(3));
}

#[test]
fn unknown_suite_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert_eq!(flandau(&["verify", "nonsense", arg(&cfg)]).status.code(), Some(2));
}

#[test]
fn oracle_and_generic_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = write_config(dir.path(), TINY);
    // The metriplectic checks need a velocity box wide enough that wrapped pairs vanish.
    let generic = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/generic.toml");
    for (suite, cfg) in [("oracle", &tiny), ("generic", &generic)] {
        let out = flandau(&["verify", suite, arg(cfg)]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert_eq!(out.status.code(), Some(0), "{suite}: {stdout}");
        assert!(stdout.lines().any(|l| l.starts_with("PASS")));
        assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
    }
}

#[test]
fn single_entry_sweep_has_empty_cauchy_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAITHFUL);
    let schedule = dir.path().join("schedule.txt");
    std::fs::write(&schedule, "0.1 0.05 0.005\n").unwrap();
    let out = flandau(&["sweep", arg(&cfg), arg(&schedule)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep_report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].split(',').nth(4), Some(""));
}

#[test]
fn malformed_schedule_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAITHFUL);
    let schedule = dir.path().join("schedule.txt");
    std::fs::write(&schedule, "0.1 0.05\n").unwrap();
    assert_eq!(flandau(&["sweep", arg(&cfg), arg(&schedule)]).status.code(), Some(2));
}
