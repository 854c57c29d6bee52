use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExponentCase, MollifyAuditSpec, MonotonicityAuditSpec, Tolerances};
use super::{criteria, Verdict};
use crate::error::Result;
use crate::grid::{Grid, PeriodicField, SpaceTimeField};
use crate::model::{
    check_exponent_profile, monotonicity_matrix, random_samples, verify_derivatives_fd, ExponentFlags, ExponentProfile,
    Family, HamiltonianModel, SamplePoint,
};
use crate::mollify::{
    one_sided_time_mollify, symmetry_pairing_residual, zero_extend_time, TimeDirection, TimeSeries,
};
use crate::operators::{cancellation_terms, monotonicity_gap, test_battery, BatterySpec, FieldPair, Operator};
use crate::solver::{jacobian_fd_error, RegularizationParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifyAuditReport {
    pub draws: usize,
    /// Worst `|∫f θ∗g − ∫θ∗f g| / (‖f‖‖g‖)`.
    pub symmetry: f64,
    /// Worst one-sided adjointness defect relative to `‖f‖‖g‖`.
    pub adjointness: f64,
    /// Largest magnitude the forward output takes at `t ≤ 0`, or the
    /// backward output at `t ≥ T`, on zero-extended input.
    pub support_leak: f64,
    /// Worst `|t₁ + t₂| / max(|t₁|, |t₂|)` of the cancellation pair.
    pub cancellation: f64,
}

impl MollifyAuditReport {
    pub fn verdicts(&self, tol: &Tolerances) -> Vec<Verdict> {
        vec![
            Verdict::new(
                criteria::MOLLIFIER_IDENTITIES,
                self.symmetry <= tol.symmetry && self.adjointness <= tol.adjointness && self.support_leak == 0.0,
                format!(
                    "symmetry {:e}, adjointness {:e}, support leak {:e}",
                    self.symmetry, self.adjointness, self.support_leak
                ),
            ),
            Verdict::new(
                criteria::CANCELLATION_IDENTITIES,
                self.cancellation <= tol.cancellation,
                format!("worst relative residual {:e} over {} draws", self.cancellation, self.draws),
            ),
        ]
    }
}

fn series_norm(s: &TimeSeries) -> f64 {
    s.inner(s).sqrt()
}

pub(super) fn mollify_audit(grid: Grid, spec: &MollifyAuditSpec, seed: u64) -> Result<MollifyAuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spec.coefficient.realize(grid)?;
    let dt = 1.0 / spec.time_steps as f64;
    let pad = (2.0 * spec.rho / dt).ceil() as usize + 1;
    let mut report = MollifyAuditReport { draws: spec.draws, symmetry: 0.0, adjointness: 0.0, support_leak: 0.0, cancellation: 0.0 };
    let random_series = |rng: &mut ChaCha8Rng| {
        let mut v = vec![0.0; pad];
        v.extend((0..=spec.time_steps).map(|_| rng.gen_range(-1.0..1.0)));
        v.extend(vec![0.0; pad]);
        TimeSeries::new(-(pad as f64) * dt, dt, v)
    };
    for _ in 0..spec.draws {
        let delta = rng.gen_range(0.05..0.45);
        let f = PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng);
        let g = PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng);
        let sym = symmetry_pairing_residual(&f, &g, delta)?.abs() / (f.l2_norm() * g.l2_norm());
        report.symmetry = report.symmetry.max(sym);

        let (ts, us) = (random_series(&mut rng)?, random_series(&mut rng)?);
        let psi = one_sided_time_mollify(&ts, spec.rho, TimeDirection::Forward, 1)?;
        let phi = one_sided_time_mollify(&us, spec.rho, TimeDirection::Backward, 1)?;
        let adj = (ts.inner(&phi) - us.inner(&psi)).abs() / (series_norm(&ts) * series_norm(&us));
        report.adjointness = report.adjointness.max(adj);

        let m_diff = PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng);
        let u_diff = PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng);
        let (t1, t2) = cancellation_terms(&a, &m_diff, &u_diff, delta)?;
        let scale = t1.abs().max(t2.abs()).max(f64::MIN_POSITIVE);
        report.cancellation = report.cancellation.max((t1 + t2).abs() / scale);
    }

    let slices = (0..=spec.time_steps.min(50))
        .map(|_| PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng))
        .collect();
    let field = SpaceTimeField::new(1.0, slices)?;
    let ext = zero_extend_time(&field);
    let pad = ext.padding_for(spec.rho.min(0.45));
    for node in 0..grid.len() {
        let s = ext.series(node, pad);
        let fwd = one_sided_time_mollify(&s, spec.rho.min(0.45), TimeDirection::Forward, 2)?;
        let bwd = one_sided_time_mollify(&s, spec.rho.min(0.45), TimeDirection::Backward, 2)?;
        for i in 0..s.values.len() {
            let t = s.time(i);
            if t <= 1e-12 {
                report.support_leak = report.support_leak.max(fwd.values[i].abs());
            }
            if t >= field.horizon() - 1e-12 {
                report.support_leak = report.support_leak.max(bwd.values[i].abs());
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAudit {
    pub family: Family,
    pub pairs: usize,
    pub min_gap: f64,
    pub min_eigenvalue: f64,
    pub witness: SamplePoint,
    /// Closed-form minimum over the same samples, when `D²_pmH = 0`.
    pub analytic_min_eigenvalue: Option<f64>,
    /// Worst per-sample gap between computed and closed-form eigenvalues.
    pub analytic_mismatch: Option<f64>,
    pub derivative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityAuditReport {
    pub families: Vec<FamilyAudit>,
    /// Worst Jacobian consistency error over the seeded states.
    pub jacobian_error: Option<f64>,
    pub jacobian_states: usize,
}

impl MonotonicityAuditReport {
    pub fn verdicts(&self, tol: &Tolerances) -> Vec<Verdict> {
        let gaps: Vec<String> = self.families.iter().map(|f| format!("{} {:e}", f.family.name(), f.min_gap)).collect();
        let gap_ok = self.families.iter().all(|f| f.min_gap >= -tol.monotonicity_gap);
        let eigs: Vec<String> = self
            .families
            .iter()
            .map(|f| format!("{} {:e} (mismatch {:?})", f.family.name(), f.min_eigenvalue, f.analytic_mismatch))
            .collect();
        let eig_ok = self
            .families
            .iter()
            .all(|f| f.min_eigenvalue > 0.0 && f.analytic_mismatch.is_none_or(|m| m <= tol.matrix_analytic));
        let fd: Vec<String> = self.families.iter().map(|f| format!("{} {:e}", f.family.name(), f.derivative_error)).collect();
        let fd_ok = self.families.iter().all(|f| f.derivative_error <= tol.derivatives)
            && self.jacobian_error.is_none_or(|e| e <= tol.derivatives);
        vec![
            Verdict::new(criteria::OPERATOR_MONOTONICITY, gap_ok, format!("min gaps: {}", gaps.join(", "))),
            Verdict::new(criteria::MONOTONICITY_MATRIX, eig_ok, format!("min eigenvalues: {}", eigs.join(", "))),
            Verdict::new(
                criteria::DERIVATIVE_AUDITS,
                fd_ok,
                format!("fd errors: {}; Jacobian {:?}", fd.join(", "), self.jacobian_error),
            ),
        ]
    }
}

/// Smallest eigenvalue of the monotonicity matrix in closed form for the
/// families with `D²_pmH = 0`: `min(m·λ_min(D²_ppH), −D_mH)`.
pub fn analytic_matrix_min_eig(family: Family, dim: usize, s: &SamplePoint) -> Option<f64> {
    let p2: f64 = s.p.iter().take(dim).map(|x| x * x).sum();
    match family {
        Family::QuadraticLog => Some(s.m.min(1.0 / s.m)),
        Family::Power { gamma, beta } => {
            let t = 1.0 + p2;
            let radial = t.powf(gamma / 2.0 - 2.0) * (1.0 + (gamma - 1.0) * p2);
            let transverse = t.powf(gamma / 2.0 - 1.0);
            let hess = if dim == 1 { radial } else { radial.min(transverse) };
            Some((s.m * hess).min(beta * s.m.powf(beta - 1.0)))
        }
        Family::Congestion { .. } => None,
    }
}

pub(super) fn monotonicity_audit(config: &ExperimentConfig, spec: &MonotonicityAuditSpec) -> Result<MonotonicityAuditReport> {
    let grid = config.grid()?;
    let base = config.model.build(grid)?;
    let mut families = Vec::new();
    for (fi, &family) in spec.families.iter().enumerate() {
        let model =
            HamiltonianModel::new(family, base.diffusion().clone(), base.drift().clone(), base.potential().clone())?;
        let seed = config.seed.wrapping_mul(1000).wrapping_add(fi as u64);
        let battery = test_battery(
            grid,
            &BatterySpec { count: 2 * spec.pairs, max_mode: 4, density_amplitude: 0.8, value_amplitude: 0.5, seed },
        )?;
        let mut min_gap = f64::INFINITY;
        for w in battery.chunks_exact(2) {
            min_gap = min_gap.min(monotonicity_gap(&w[0], &w[1], Operator::A, &model)?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples =
            random_samples(grid, spec.matrix_samples, spec.p_max, (spec.m_range[0], spec.m_range[1]), &mut rng);
        let mut min_eigenvalue = f64::INFINITY;
        let mut witness = samples[0];
        let mut analytic_min = Some(f64::INFINITY);
        let mut mismatch = Some(0.0f64);
        for s in &samples {
            let eig = monotonicity_matrix(&model, s)?.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            if eig < min_eigenvalue {
                min_eigenvalue = eig;
                witness = *s;
            }
            match analytic_matrix_min_eig(family, grid.dim(), s) {
                Some(pred) => {
                    analytic_min = analytic_min.map(|a| a.min(pred));
                    mismatch = mismatch.map(|m| m.max((eig - pred).abs()));
                }
                None => {
                    analytic_min = None;
                    mismatch = None;
                }
            }
        }
        let derivative_error = verify_derivatives_fd(&model, spec.fd_samples, spec.fd_step, &mut rng)?;
        families.push(FamilyAudit {
            family,
            pairs: spec.pairs,
            min_gap,
            min_eigenvalue,
            witness,
            analytic_min_eigenvalue: analytic_min,
            analytic_mismatch: mismatch,
            derivative_error,
        });
    }
    let jacobian_error = if spec.jacobian_states > 0 {
        let model = HamiltonianModel::new(
            Family::QuadraticLog,
            base.diffusion().clone(),
            base.drift().clone(),
            base.potential().clone(),
        )?;
        let template = config.regularization.template(grid.dim());
        let states = test_battery(
            grid,
            &BatterySpec { count: spec.jacobian_states, max_mode: 4, density_amplitude: 0.8, value_amplitude: 0.5, seed: config.seed },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        let mut worst: f64 = 0.0;
        for (i, st) in states.iter().enumerate() {
            // spread σ over [1e-3, 1e-1]
            let sigma = 10f64.powf(-1.0 - 2.0 * i as f64 / spec.jacobian_states.max(2).saturating_sub(1) as f64);
            let params = RegularizationParams { sigma, ..template };
            let dir = FieldPair::new(
                PeriodicField::random_band_limited(grid, 4, 0.1, &mut rng),
                PeriodicField::random_band_limited(grid, 4, 0.1, &mut rng),
            )?;
            worst = worst.max(jacobian_fd_error(st, &dir, &model, &params, spec.fd_step)?);
        }
        Some(worst)
    } else {
        None
    };
    Ok(MonotonicityAuditReport { families, jacobian_error, jacobian_states: spec.jacobian_states })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentOutcome {
    pub profile: ExponentProfile,
    pub flags: ExponentFlags,
    pub matches_expectations: bool,
    pub mismatches: Vec<String>,
}

pub(super) fn exponent_check(cases: &[ExponentCase]) -> Result<Vec<ExponentOutcome>> {
    cases
        .iter()
        .map(|c| {
            let (profile, flags) =
                check_exponent_profile(c.r, c.gamma, c.r1.unwrap_or(c.r), c.gamma1.unwrap_or(c.gamma), c.d)?;
            let mut mismatches = Vec::new();
            if let Some(want) = c.expect_super_q {
                if want != flags.super_q {
                    mismatches.push(format!("super_q {} != {want}", flags.super_q));
                }
            }
            if let Some(want) = c.expect_sobolev {
                if want != flags.sobolev {
                    mismatches.push(format!("sobolev {} != {want}", flags.sobolev));
                }
            }
            if let Some(want) = c.expect_q {
                for (i, (got, w)) in profile.q.iter().zip(want).enumerate() {
                    if !got.is_some_and(|g| (g - w).abs() <= 1e-12 * w.abs()) {
                        mismatches.push(format!("q{} {got:?} != {w}", i + 1));
                    }
                }
            }
            if let Some(want) = c.expect_gamma_star {
                if !profile.gamma_star.is_some_and(|g| (g - want).abs() <= 1e-12 * want.abs()) {
                    mismatches.push(format!("gamma_star {:?} != {want}", profile.gamma_star));
                }
            }
            Ok(ExponentOutcome { profile, flags, matches_expectations: mismatches.is_empty(), mismatches })
        })
        .collect()
}
