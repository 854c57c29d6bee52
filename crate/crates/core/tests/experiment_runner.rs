use std::path::Path;
use std::process::Command;

use mfglab::experiment::report::STAGE_COLUMNS;
use mfglab::experiment::{
    emit_report, load_field_expecting, run_experiment, save_field, uniqueness_experiment, ExperimentConfig, ReportFormat,
};
use mfglab::grid::{Grid, PeriodicField};
use mfglab::Error;

const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg];

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
kind = "sweep"
seed = 4
schedule = [1e-1, 1e-2, 1e-3]
[grid]
dim = 1
n = 32
[model]
family = "quadratic_log"
a = { constant = 1.0, modes = [{ k = [1], cos = 0.1 }] }
potential = { modes = [{ k = [1], cos = 0.1 }] }
"#,
    )
    .unwrap()
}

#[test]
fn identical_config_gives_identical_record_and_csv() {
    let c = sweep_config();
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(a.without_timestamps(), b.without_timestamps());
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&a, &[ReportFormat::Csv], da.path()).unwrap();
    emit_report(&b, &[ReportFormat::Csv], db.path()).unwrap();
    let read = |d: &Path| std::fs::read(d.join("stages.csv")).unwrap();
    assert_eq!(read(da.path()), read(db.path()));
}

#[test]
fn sweep_csv_header_and_missing_plot_note() {
    let rec = run_experiment(&sweep_config()).unwrap();
    assert!(rec.convergence.is_none());
    let dir = tempfile::tempdir().unwrap();
    emit_report(&rec, &ALL, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("stages.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("sigma,entropy,mass_residual,sqrt_m_err_sq,u_h1_err,"));
    assert_eq!(header.split(',').count(), STAGE_COLUMNS.len());
    assert_eq!(csv.lines().count(), 4);
    assert!(!dir.path().join("convergence.svg").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(json["plot"], "omitted: record has no rate fit");
    assert_eq!(json["kind"], "sweep");
}

#[test]
fn svg_written_when_a_fit_exists() {
    let mut c = sweep_config();
    c.model = Default::default();
    c.reference = Some(mfglab::experiment::PairSpec::constant(1.0, 0.0));
    let rec = run_experiment(&c).unwrap();
    assert!(rec.convergence.as_ref().unwrap().fit.is_some());
    let dir = tempfile::tempdir().unwrap();
    emit_report(&rec, &ALL, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("convergence.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("circle"));
}

#[test]
fn empty_record_is_rejected() {
    let mut rec = run_experiment(&sweep_config()).unwrap();
    rec.series.clear();
    rec.verdicts.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(&rec, &ALL, dir.path()), Err(Error::Validation(_))));
}

#[test]
fn uniqueness_on_trivial_setup() {
    let c = ExperimentConfig::from_toml(
        r#"
kind = "uniqueness"
[grid]
dim = 1
n = 32
[uniqueness]
guesses = [
  { density = { constant = 1.2 }, value = { constant = 0.1 } },
  { density = { constant = 0.8 }, value = { constant = -0.1 } },
]
schedules = [[1e-1, 1e-2, 1e-3], [3e-1, 3e-2, 1e-3]]
"#,
    )
    .unwrap();
    let u = uniqueness_experiment(&c).unwrap();
    assert_eq!(u.distances.len(), 6);
    assert!(u.max_distance.unwrap() <= 1e-6);
    assert!(u.weak_checks.iter().all(|w| w.passes(1e-4) && w.label == "corroboration"));
}

#[test]
fn congestion_config_rejected_for_solves() {
    let c = ExperimentConfig::from_toml(
        r#"
kind = "solve"
schedule = [0.1]
[grid]
dim = 1
n = 16
[model]
family = "congestion"
gamma = 2.0
alpha = 0.5
"#,
    )
    .unwrap();
    assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
}

#[test]
fn field_for_wrong_dimension_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.bin");
    save_field(&PeriodicField::constant(Grid::new(2, 8).unwrap(), 1.0), &p).unwrap();
    assert!(matches!(load_field_expecting(&p, 1), Err(Error::Validation(_))));
    assert!(load_field_expecting(&p, 2).is_ok());
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mfglab")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let good = write(
        dir.path(),
        "good.toml",
        "[grid]\ndim = 1\nn = 8\n[[exponents]]\nr = 4.0\ngamma = 4.0\nd = 3\nexpect_super_q = true\n",
    );
    let (code, stdout) = cli(&["exponent-check", "--config", &good, "--out-dir", out]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS exponent_checker"));

    let wrong = write(
        dir.path(),
        "wrong.toml",
        "[grid]\ndim = 1\nn = 8\n[[exponents]]\nr = 2.0\ngamma = 2.0\nd = 3\nexpect_super_q = true\n",
    );
    assert_eq!(cli(&["exponent-check", "--config", &wrong, "--out-dir", out]).0, 1);

    let bad_schedule = write(dir.path(), "bad.toml", "schedule = [0.1, 0.2]\n[grid]\ndim = 1\nn = 8\n");
    assert_eq!(cli(&["solve", "--config", &bad_schedule, "--out-dir", out]).0, 2);
    assert_eq!(cli(&["sweep", "--config", &good, "--out-dir", out]).0, 2);
    assert_eq!(cli(&["solve", "--config", "/nonexistent.toml"]).0, 2);
    assert_eq!(cli(&["solve", "--config", &good, "--format", "pdf"]).0, 2);
}

#[test]
fn cli_seed_override_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", "[grid]\ndim = 1\nn = 32\n[mollify_audit]\ndraws = 5\n");
    let hash = |seed: &str, sub: &str| {
        let o = dir.path().join(sub);
        let (code, _) = cli(&["mollify-audit", "--config", &cfg, "--seed", seed, "--out-dir", o.to_str().unwrap(), "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("record.json")).unwrap()).unwrap();
        (v["config_hash"].as_str().unwrap().to_string(), v["seed"].as_u64().unwrap())
    };
    let (a, sa) = hash("1", "a");
    let (b, sb) = hash("2", "b");
    assert_ne!(a, b);
    assert_eq!((sa, sb), (1, 2));
}
