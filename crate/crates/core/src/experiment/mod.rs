//! Config-driven runs, run records, field files and reports.

mod audits;
pub mod config;
pub mod io;
pub mod report;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{convergence_rate_fit, elementary_sweep, entropy_bound_check, ConvergenceReport, EntropyCheck, EstimateReport, EstimateRow};
use crate::grid::Grid;
use crate::model::HamiltonianModel;
use crate::operators::{test_battery, weak_inequality_check, FieldPair, WeakCheck};
use crate::solver::{sigma_continuation, RegularizationParams, SolverReport};

pub use audits::{analytic_matrix_min_eig, ExponentOutcome, FamilyAudit, MollifyAuditReport, MonotonicityAuditReport};
pub use config::{ExperimentConfig, ExperimentKind, FieldSpec, ModeSpec, ModelSpec, PairSpec, Tolerances};
pub use io::{load_field, load_field_csv, load_field_expecting, save_field, save_field_csv};
pub use report::{emit_report, ReportFormat};

/// Names of the acceptance criteria a verdict can refer to.
pub mod criteria {
    pub const STRONG_CONVERGENCE_RATE: &str = "strong_convergence_rate";
    pub const MASS_IDENTITY: &str = "mass_identity";
    pub const OPERATOR_MONOTONICITY: &str = "operator_monotonicity";
    pub const MONOTONICITY_MATRIX: &str = "monotonicity_matrix";
    pub const MOLLIFIER_IDENTITIES: &str = "mollifier_identities";
    pub const CANCELLATION_IDENTITIES: &str = "cancellation_identities";
    pub const ESTIMATE_UNIFORMITY: &str = "estimate_uniformity";
    pub const ELEMENTARY_INEQUALITY: &str = "elementary_inequality";
    pub const WEAK_STRONG_UNIQUENESS: &str = "weak_strong_uniqueness";
    pub const EXPONENT_CHECKER: &str = "exponent_checker";
    pub const DERIVATIVE_AUDITS: &str = "derivative_audits";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &str, passed: bool, detail: impl Into<String>) -> Self {
        let outcome = if passed { Outcome::Pass } else { Outcome::Fail };
        Verdict { criterion: criterion.into(), outcome, detail: detail.into() }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

/// One σ-stage as recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub sigma: f64,
    pub solver: SolverReport,
    pub mass_residual: f64,
    /// Only for converged stages.
    pub estimates: Option<EstimateRow>,
    pub entropy: Vec<EntropyCheck>,
    /// `‖√m_σ − √m*‖²` against the reference, when one is configured.
    pub sqrt_m_err_sq: Option<f64>,
    /// `‖u_σ − u*‖_{W^{1,2}}` against the reference.
    pub u_h1_err: Option<f64>,
}

/// A continuation run along one schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub name: String,
    pub stages: Vec<StageRecord>,
    pub failure: Option<String>,
}

impl SeriesRecord {
    pub fn converged(&self) -> bool {
        self.failure.is_none() && self.stages.iter().all(|s| s.solver.converged)
    }

    pub fn estimate_report(&self) -> EstimateReport {
        EstimateReport { rows: self.stages.iter().filter_map(|s| s.estimates).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub first: usize,
    pub second: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Path `g·schedules + s` starts from guess `g` along schedule `s`.
    pub paths: Vec<SeriesRecord>,
    pub distances: Vec<PairDistance>,
    pub max_distance: Option<f64>,
    pub weak_checks: Vec<WeakCheck>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub series: Vec<SeriesRecord>,
    pub convergence: Option<ConvergenceReport>,
    pub uniqueness: Option<UniquenessReport>,
    pub mollify: Option<MollifyAuditReport>,
    pub monotonicity: Option<MonotonicityAuditReport>,
    pub exponents: Vec<ExponentOutcome>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
            && self.series.is_empty()
            && self.uniqueness.is_none()
            && self.mollify.is_none()
            && self.monotonicity.is_none()
            && self.exponents.is_empty()
    }

    /// The record with timestamps zeroed, for determinism checks.
    pub fn without_timestamps(&self) -> RunRecord {
        RunRecord { started_unix: 0.0, finished_unix: 0.0, ..self.clone() }
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Validates `config` and runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let kind = config.validate()?;
    let mut record = RunRecord {
        kind,
        config_hash: config.hash(),
        seed: config.seed,
        started_unix: now(),
        finished_unix: 0.0,
        series: Vec::new(),
        convergence: None,
        uniqueness: None,
        mollify: None,
        monotonicity: None,
        exponents: Vec::new(),
        verdicts: Vec::new(),
        notes: Vec::new(),
    };
    match kind {
        ExperimentKind::Solve => run_solve(config, &mut record)?,
        ExperimentKind::Sweep => run_sweep(config, &mut record)?,
        ExperimentKind::Uniqueness => {
            let report = uniqueness_experiment(config)?;
            record.verdicts.push(uniqueness_verdict(&report, &config.tolerances));
            record.uniqueness = Some(report);
        }
        ExperimentKind::MollifyAudit => {
            let spec = config.mollify_audit.clone().unwrap_or_default();
            let report = audits::mollify_audit(config.grid()?, &spec, config.seed)?;
            record.verdicts.extend(report.verdicts(&config.tolerances));
            record.mollify = Some(report);
        }
        ExperimentKind::MonotonicityAudit => {
            let spec = config.monotonicity_audit.clone().unwrap_or_default();
            let report = audits::monotonicity_audit(config, &spec)?;
            record.verdicts.extend(report.verdicts(&config.tolerances));
            record.monotonicity = Some(report);
        }
        ExperimentKind::ExponentCheck => {
            record.exponents = audits::exponent_check(&config.exponents)?;
            let bad: Vec<String> = record
                .exponents
                .iter()
                .filter(|e| !e.matches_expectations)
                .map(|e| format!("(r={}, gamma={}, d={})", e.profile.r, e.profile.gamma, e.profile.d))
                .collect();
            let detail = if bad.is_empty() {
                format!("{} cases match", record.exponents.len())
            } else {
                format!("mismatched: {}", bad.join(", "))
            };
            record.verdicts.push(Verdict::new(criteria::EXPONENT_CHECKER, bad.is_empty(), detail));
        }
    }
    record.finished_unix = now();
    Ok(record)
}

/// Runs one continuation and records every attempted stage.
fn run_series(
    name: &str,
    model: &HamiltonianModel,
    schedule: &[f64],
    template: &RegularizationParams,
    initial: &FieldPair,
    config: &ExperimentConfig,
    reference: Option<&FieldPair>,
) -> Result<(SeriesRecord, Vec<(f64, FieldPair)>)> {
    let run = sigma_continuation(model, schedule, template, initial, &config.controls)?;
    let mut stages = Vec::with_capacity(run.stages.len());
    let mut pairs = Vec::new();
    for st in &run.stages {
        let params = template.with_sigma(st.sigma);
        let mut rec = StageRecord {
            sigma: st.sigma,
            mass_residual: st.report.mass_residual,
            solver: st.report.clone(),
            estimates: None,
            entropy: Vec::new(),
            sqrt_m_err_sq: None,
            u_h1_err: None,
        };
        if st.report.converged {
            rec.estimates = Some(EstimateRow::compute(&st.pair, model.diffusion(), &params)?);
            rec.entropy = config
                .entropy_deltas
                .iter()
                .map(|&d| entropy_bound_check(&st.pair.density, d))
                .collect::<Result<_>>()?;
            if let Some(r) = reference {
                let dsq = st.pair.density.map(f64::sqrt).sub(&r.density.map(f64::sqrt));
                rec.sqrt_m_err_sq = Some(dsq.inner(&dsq));
                rec.u_h1_err = Some(st.pair.value.sub(&r.value).h1_norm());
            }
            pairs.push((st.sigma, st.pair.clone()));
        }
        stages.push(rec);
    }
    Ok((SeriesRecord { name: name.into(), stages, failure: run.failure }, pairs))
}

fn mass_verdict(series: &[SeriesRecord], tol: f64) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut unconverged = Vec::new();
    for s in series {
        for st in &s.stages {
            if st.solver.converged {
                worst = worst.max(st.mass_residual);
            } else {
                unconverged.push(format!("{}@{:e}", s.name, st.sigma));
            }
        }
    }
    if unconverged.is_empty() {
        Verdict::new(criteria::MASS_IDENTITY, worst <= tol, format!("max residual {worst:e} (tol {tol:e})"))
    } else {
        Verdict::new(criteria::MASS_IDENTITY, false, format!("unconverged stages: {}", unconverged.join(", ")))
    }
}

fn run_solve(config: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let grid = config.grid()?;
    let model = config.model.build(grid)?;
    let template = config.regularization.template(grid.dim());
    let reference = config.reference.as_ref().map(|r| r.realize(grid)).transpose()?;
    let (series, _) =
        run_series("main", &model, &config.schedule, &template, &config.initial_pair(grid)?, config, reference.as_ref())?;
    record.verdicts.push(mass_verdict(std::slice::from_ref(&series), config.tolerances.mass_identity));
    if config.controls.audit_jacobian {
        let worst = series.stages.iter().filter_map(|s| s.solver.jacobian_audit).fold(0.0, f64::max);
        let tol = config.tolerances.derivatives;
        record.verdicts.push(Verdict::new(
            criteria::DERIVATIVE_AUDITS,
            worst <= tol,
            format!("worst Jacobian audit {worst:e} (tol {tol:e})"),
        ));
    }
    if let Some(f) = &series.failure {
        record.notes.push(f.clone());
    }
    record.series.push(series);
    Ok(())
}

fn run_sweep(config: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let grid = config.grid()?;
    let tol = &config.tolerances;
    let model = config.model.build(grid)?;
    let template = config.regularization.template(grid.dim());
    let initial = config.initial_pair(grid)?;
    let reference = config.reference.as_ref().map(|r| r.realize(grid)).transpose()?;
    let (main, pairs) = run_series("main", &model, &config.schedule, &template, &initial, config, reference.as_ref())?;
    record.series.push(main);
    for c in &config.companions {
        let m = c.model.build(grid)?;
        let (s, _) = run_series(&c.name, &m, &c.schedule, &template, &initial, config, None)?;
        record.series.push(s);
    }
    for s in &record.series {
        if let Some(f) = &s.failure {
            record.notes.push(format!("{}: {f}", s.name));
        }
    }
    record.verdicts.push(mass_verdict(&record.series, tol.mass_identity));

    let mut elementary_min = elementary_sweep(1e-3, 1e3, 100);
    if let Some(r) = &reference {
        if pairs.len() == config.schedule.len() {
            let conv = convergence_rate_fit(&pairs, r)?;
            let [lo, hi] = tol.rate_slope;
            let v = match conv.fit {
                Some(fit) => Verdict::new(
                    criteria::STRONG_CONVERGENCE_RATE,
                    (lo..=hi).contains(&fit.slope) && conv.value_errors_decreasing,
                    format!(
                        "slope {:.4} (want [{lo}, {hi}]); value errors strictly decreasing: {}",
                        fit.slope, conv.value_errors_decreasing
                    ),
                ),
                None => Verdict::new(criteria::STRONG_CONVERGENCE_RATE, false, "errors vanish; no rate to fit"),
            };
            if conv.fit.is_none() {
                record.notes.push("no rate fit: errors vanish at some stage".into());
            }
            record.verdicts.push(v);
            elementary_min = elementary_min.min(conv.elementary_audit.iter().copied().fold(f64::INFINITY, f64::min));
            record.convergence = Some(conv);
        } else {
            record.verdicts.push(Verdict::new(criteria::STRONG_CONVERGENCE_RATE, false, "sweep did not converge at every stage"));
            record.notes.push("no rate fit: unconverged stages".into());
        }
    }

    let mut problems = Vec::new();
    for s in &record.series {
        let rep = s.estimate_report();
        if rep.rows.len() != s.stages.len() || rep.rows.is_empty() {
            problems.push(format!("{}: missing estimate rows", s.name));
        }
        for (name, ok) in rep.uniformity() {
            if !ok {
                problems.push(format!("{}: {name} not uniform", s.name));
            }
        }
        for st in &s.stages {
            for e in st.entropy.iter().filter(|e| !e.passes) {
                problems.push(format!("{}: entropy bound fails at sigma {:e}, delta {}", s.name, st.sigma, e.delta));
            }
        }
    }
    let series_names: Vec<&str> = record.series.iter().map(|s| s.name.as_str()).collect();
    let detail = if problems.is_empty() {
        format!("all functionals uniform over series {}", series_names.join(", "))
    } else {
        problems.join("; ")
    };
    record.verdicts.push(Verdict::new(criteria::ESTIMATE_UNIFORMITY, problems.is_empty(), detail));
    record.verdicts.push(Verdict::new(
        criteria::ELEMENTARY_INEQUALITY,
        elementary_min >= -tol.elementary,
        format!("min gap {elementary_min:e}"),
    ));
    Ok(())
}

/// Runs every guess along every schedule, then compares the limits.
pub fn uniqueness_experiment(config: &ExperimentConfig) -> Result<UniquenessReport> {
    let mut checked = config.clone();
    checked.kind = Some(ExperimentKind::Uniqueness);
    checked.validate()?;
    let spec = config.uniqueness.as_ref().ok_or_else(|| Error::config("uniqueness section missing"))?;
    let grid: Grid = config.grid()?;
    let model = config.model.build(grid)?;
    let template = config.regularization.template(grid.dim());
    let mut paths = Vec::new();
    let mut limits = Vec::new();
    for (g, guess) in spec.guesses.iter().enumerate() {
        let initial = guess.realize(grid)?;
        for (s, schedule) in spec.schedules.iter().enumerate() {
            let name = format!("guess{g}-schedule{s}");
            let (rec, pairs) = run_series(&name, &model, schedule, &template, &initial, config, None)?;
            if rec.converged() {
                limits.push(pairs.last().map(|(_, p)| p.clone()));
            } else {
                limits.push(None);
            }
            paths.push(rec);
        }
    }
    let mut distances = Vec::new();
    for i in 0..limits.len() {
        for j in i + 1..limits.len() {
            if let (Some(a), Some(b)) = (&limits[i], &limits[j]) {
                distances.push(PairDistance { first: i, second: j, distance: a.l2_distance(b) });
            }
        }
    }
    let mut battery = spec.battery;
    battery.seed = battery.seed.wrapping_add(config.seed);
    let tests = test_battery(grid, &battery)?;
    let weak_checks =
        limits.iter().flatten().map(|l| weak_inequality_check(l, &tests, &model)).collect::<Result<Vec<_>>>()?;
    let complete = limits.iter().all(Option::is_some);
    let max_distance = distances.iter().map(|d| d.distance).reduce(f64::max);
    let tol = &config.tolerances;
    let outcome = if !complete {
        Outcome::Inconclusive
    } else if max_distance.is_some_and(|d| d <= tol.uniqueness_distance) && weak_checks.iter().all(|w| w.passes(tol.weak_tau)) {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    Ok(UniquenessReport { paths, distances, max_distance, weak_checks, outcome })
}

fn uniqueness_verdict(report: &UniquenessReport, tol: &Tolerances) -> Verdict {
    let weak_min = report.weak_checks.iter().map(|w| w.min_value).fold(f64::INFINITY, f64::min);
    let detail = match report.outcome {
        Outcome::Inconclusive => {
            let failed: Vec<&str> = report.paths.iter().filter(|p| !p.converged()).map(|p| p.name.as_str()).collect();
            format!("inconclusive: paths failed: {}", failed.join(", "))
        }
        _ => format!(
            "max distance {:e} (tol {:e}); weak check min {weak_min:e} (tau {:e})",
            report.max_distance.unwrap_or(f64::NAN),
            tol.uniqueness_distance,
            tol.weak_tau
        ),
    };
    Verdict { criterion: criteria::WEAK_STRONG_UNIQUENESS.into(), outcome: report.outcome, detail }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial(kind: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "kind = \"{kind}\"\nschedule = [0.1, 0.01, 0.001]\n{extra}\n[grid]\ndim = 1\nn = 32\n"
        ))
        .unwrap()
    }

    #[test]
    fn solve_trivial_converges() {
        let rec = run_experiment(&trivial("solve", "")).unwrap();
        assert!(rec.series[0].converged());
        assert!(rec.all_passed(), "{:?}", rec.verdicts);
    }

    #[test]
    fn malformed_schedule_fails_before_compute() {
        let mut c = trivial("solve", "");
        c.schedule = vec![0.1, 0.5];
        assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
    }

    #[test]
    fn exponent_check_example() {
        let c = ExperimentConfig::from_toml(
            r#"
kind = "exponent-check"
[grid]
dim = 1
n = 8
[[exponents]]
r = 4.0
gamma = 4.0
d = 3
expect_super_q = true
expect_q = [2.0, 2.0, 4.0, 4.0]
"#,
        )
        .unwrap();
        let rec = run_experiment(&c).unwrap();
        assert!(rec.all_passed(), "{:?}", rec.verdicts);
    }

    #[test]
    fn uniqueness_guards() {
        let base = "[uniqueness]\nguesses = [{ density = { constant = 1.2 }, value = { constant = 0.1 } }]\nschedules = [[0.1, 0.001], [0.3, 0.001]]";
        assert!(matches!(uniqueness_experiment(&trivial("uniqueness", base)), Err(Error::Config(_))));
        let mixed = "[uniqueness]\nguesses = [{ density = { constant = 1.2 }, value = { constant = 0.1 } }, { density = { constant = 0.8 }, value = { constant = -0.1 } }]\nschedules = [[0.1, 0.001], [0.3, 0.002]]";
        assert!(matches!(uniqueness_experiment(&trivial("uniqueness", mixed)), Err(Error::Config(_))));
    }
}
