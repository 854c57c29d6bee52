//! Damped Newton iteration with continuation in σ for the regularized
//! quadratic–logarithmic system.
//!
//! The unknowns are the Fourier coefficients of `(η, v)`. Working on
//! coefficients keeps the `σ Δ^{2k}` terms exact: on a 128-point grid with
//! `k = 3` their symbol reaches `10^{31}`, far beyond what a round trip
//! through physical samples can tolerate.

mod gmres;
mod penalty;

pub use penalty::{
    beta_sigma, beta_sigma_prime, min_k, smooth_step, smooth_step_prime, Blend, RegularizationParams,
};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Complex64, Grid, PeriodicField, VectorField};
use crate::model::{Family, HamiltonianModel};
use crate::operators::{apply_a, FieldPair, ResidualPair};
use gmres::{gmres, GmresOptions};

type C = Complex64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Restarted GMRES with the block Fourier preconditioner.
    #[default]
    Gmres,
    /// Dense LU of the preconditioned Jacobian; 1-D grids with `n ≤ 64`.
    Dense,
}

/// Newton controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverControls {
    /// Target sup-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest step length the line search may try.
    #[serde(default = "default_damping_floor")]
    pub damping_floor: f64,
    #[serde(default)]
    pub linear_solver: LinearSolver,
    /// Run the finite-difference Jacobian audit at every accepted iterate.
    #[serde(default)]
    pub audit_jacobian: bool,
}

fn default_damping_floor() -> f64 {
    (2.0f64).powi(-20)
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            tol: 1e-10,
            max_iter: 50,
            damping_floor: default_damping_floor(),
            linear_solver: LinearSolver::Gmres,
            audit_jacobian: false,
        }
    }
}

/// What happened during one Newton solve. Written on failure too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub sigma: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual sup-norm before each iteration and at the end.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    /// Accepted step lengths.
    pub damping_history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    /// `min η` at the final iterate.
    pub positivity_margin: f64,
    /// `|∫η + σ∫v − 1|` at the final iterate.
    pub mass_residual: f64,
    /// Worst Jacobian audit error, when auditing.
    pub jacobian_audit: Option<f64>,
    pub failure: Option<String>,
}

/// The regularized system at fixed σ, on Fourier coefficients.
struct System<'a> {
    model: &'a HamiltonianModel,
    params: RegularizationParams,
    grid: Grid,
    /// `σ(1 + λ^{2k})` per mode, `λ = 4π²|ξ|²`.
    stiff: Vec<f64>,
}

/// Coefficients of `(η, v)`.
#[derive(Clone, Debug)]
struct State {
    eta: Vec<C>,
    v: Vec<C>,
}

impl State {
    fn from_pair(pair: &FieldPair) -> Self {
        State { eta: pair.density.spectrum().to_vec(), v: pair.value.spectrum().to_vec() }
    }

    fn to_pair(&self, grid: Grid) -> FieldPair {
        FieldPair {
            density: PeriodicField::from_spectrum(grid, self.eta.clone()),
            value: PeriodicField::from_spectrum(grid, self.v.clone()),
        }
    }

    fn axpy(&self, t: f64, d: &State) -> State {
        let f = |a: &[C], b: &[C]| a.iter().zip(b).map(|(x, y)| x + t * y).collect();
        State { eta: f(&self.eta, &d.eta), v: f(&self.v, &d.v) }
    }
}

fn split(x: &[C]) -> (Vec<C>, Vec<C>) {
    let n = x.len() / 2;
    (x[..n].to_vec(), x[n..].to_vec())
}

fn join(a: Vec<C>, b: Vec<C>) -> Vec<C> {
    let mut out = a;
    out.extend(b);
    out
}

fn l2(x: &[C]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Linearization data frozen at one state.
struct Linearization {
    eta: PeriodicField,
    /// `−D_mH + β′_σ(η)` per node.
    c11: PeriodicField,
    dp: VectorField,
    dpm: VectorField,
    dpp: Vec<[[f64; 2]; 2]>,
    /// Means used by the preconditioner.
    c11_mean: f64,
    a_mean: f64,
    eta_dpp_mean: f64,
}

impl<'a> System<'a> {
    fn new(model: &'a HamiltonianModel, params: RegularizationParams) -> Result<Self> {
        if model.family() != Family::QuadraticLog {
            return Err(Error::config(format!(
                "the regularized solver supports the quadratic_log family only, not {}",
                model.family().name()
            )));
        }
        let grid = model.grid();
        params.validate(grid.dim())?;
        crate::grid::check_laplacian_power(grid, 2 * params.k)?;
        let power = 2 * params.k as i32;
        let stiff = (0..grid.len())
            .map(|idx| params.sigma * (1.0 + grid.laplacian_eigenvalue(idx).powi(power)))
            .collect();
        Ok(System { model, params, grid, stiff })
    }

    fn fields(&self, s: &State) -> (PeriodicField, PeriodicField) {
        (PeriodicField::from_spectrum(self.grid, s.eta.clone()), PeriodicField::from_spectrum(self.grid, s.v.clone()))
    }

    /// Residual coefficients, or a domain error when `η` is not positive.
    fn residual(&self, s: &State) -> Result<(Vec<C>, Vec<C>)> {
        let (eta, v) = self.fields(s);
        eta.ensure_positive("density")?;
        let rows = apply_a(&FieldPair { density: eta.clone(), value: v }, self.model)?;
        let beta = PeriodicField::new(
            self.grid,
            eta.values().iter().map(|&x| beta_sigma(x, &self.params)).collect::<Result<_>>()?,
        )?;
        let hj = rows.hj.add(&beta);
        let r1 = hj.spectrum().iter().zip(&s.eta).zip(&self.stiff).map(|((r, e), k)| r + k * e).collect();
        let r2 = rows.fp.spectrum().iter().zip(&s.v).zip(&self.stiff).map(|((r, e), k)| r + k * e).collect();
        Ok((r1, r2))
    }

    fn sup_norm(&self, r: &(Vec<C>, Vec<C>)) -> f64 {
        let a = PeriodicField::from_spectrum(self.grid, r.0.clone()).sup_norm();
        let b = PeriodicField::from_spectrum(self.grid, r.1.clone()).sup_norm();
        a.max(b)
    }

    fn linearize(&self, s: &State) -> Result<Linearization> {
        let (eta, v) = self.fields(s);
        eta.ensure_positive("density")?;
        let bundle = self.model.eval_fields(&v.gradient(), &eta)?;
        let beta_prime: Vec<f64> =
            eta.values().iter().map(|&x| beta_sigma_prime(x, &self.params)).collect::<Result<_>>()?;
        let c11 = PeriodicField::new(
            self.grid,
            bundle.dm.values().iter().zip(&beta_prime).map(|(dm, bp)| -dm + bp).collect(),
        )?;
        let dim = self.grid.dim();
        let eta_dpp_mean = eta
            .values()
            .iter()
            .zip(&bundle.dpp)
            .map(|(e, h)| e * (0..dim).map(|i| h[i][i]).sum::<f64>() / dim as f64)
            .sum::<f64>()
            * self.grid.weight();
        Ok(Linearization {
            c11_mean: c11.integrate(),
            a_mean: self.model.diffusion().integrate(),
            eta_dpp_mean,
            eta,
            c11,
            dp: bundle.dp,
            dpm: bundle.dpm,
            dpp: bundle.dpp,
        })
    }

    /// Jacobian action on a real direction given by Hermitian coefficients.
    fn jacobian_real(&self, lin: &Linearization, d_eta: &[C], d_v: &[C]) -> (Vec<C>, Vec<C>) {
        let grid = self.grid;
        let de = PeriodicField::from_spectrum(grid, d_eta.to_vec());
        let dv = PeriodicField::from_spectrum(grid, d_v.to_vec());
        let a = self.model.diffusion();
        let grad_dv = dv.gradient();
        // row 1: (−D_mH + β′)δη − δv + aΔδv − D_pH·Dδv
        let row1 = lin.c11.mul(&de).sub(&dv).add(&a.mul(&dv.laplacian())).sub(&lin.dp.dot(&grad_dv));
        // row 2: δη − Δ(aδη) − div(δη D_pH + η D²_pmH δη + η D²_ppH Dδv)
        let dim = grid.dim();
        let flux = VectorField::from_nodes(grid, |idx| {
            let e = lin.eta.values()[idx];
            let d = de.values()[idx];
            let g = grad_dv.at(idx);
            let p = lin.dp.at(idx);
            let pm = lin.dpm.at(idx);
            let h = lin.dpp[idx];
            let mut out = [0.0; 2];
            for i in 0..dim {
                let hg: f64 = (0..dim).map(|j| h[i][j] * g[j]).sum();
                out[i] = d * p[i] + e * pm[i] * d + e * hg;
            }
            out
        });
        let row2 = de.sub(&a.mul(&de).laplacian()).sub(&flux.divergence());
        let r1 = row1.spectrum().iter().zip(d_eta).zip(&self.stiff).map(|((r, e), k)| r + k * e).collect();
        let r2 = row2.spectrum().iter().zip(d_v).zip(&self.stiff).map(|((r, e), k)| r + k * e).collect();
        (r1, r2)
    }

    /// Complex-linear extension: `J(x) = J(Re x) + i J(Im x)` with real and
    /// imaginary parts taken in physical space.
    fn jacobian(&self, lin: &Linearization, x: &[C]) -> Vec<C> {
        let (xe, xv) = split(x);
        let parts = |c: &[C]| -> (Vec<C>, Vec<C>) {
            let n = c.len();
            let mut re = vec![C::new(0.0, 0.0); n];
            let mut im = vec![C::new(0.0, 0.0); n];
            for idx in 0..n {
                let m = self.grid.mirror_index(idx);
                let (a, b) = (c[idx], c[m].conj());
                re[idx] = 0.5 * (a + b);
                im[idx] = (a - b) / C::new(0.0, 2.0);
            }
            (re, im)
        };
        let (er, ei) = parts(&xe);
        let (vr, vi) = parts(&xv);
        let (a1, a2) = self.jacobian_real(lin, &er, &vr);
        let (b1, b2) = self.jacobian_real(lin, &ei, &vi);
        let i = C::new(0.0, 1.0);
        let r1 = a1.iter().zip(&b1).map(|(a, b)| a + i * b).collect();
        let r2 = a2.iter().zip(&b2).map(|(a, b)| a + i * b).collect();
        join(r1, r2)
    }

    /// Inverse of the per-mode block symbol
    /// `[[c̄ + s, −(1 + āλ)], [1 + āλ, ēλ + s]]`, `s = σ(1 + λ^{2k})`.
    fn precondition(&self, lin: &Linearization, x: &[C]) -> Vec<C> {
        let n = self.grid.len();
        let mut out = vec![C::new(0.0, 0.0); 2 * n];
        for idx in 0..n {
            let lam = self.grid.laplacian_eigenvalue(idx);
            let s = self.stiff[idx];
            let j11 = lin.c11_mean.max(0.0) + s;
            let j12 = -(1.0 + lin.a_mean * lam);
            let j21 = 1.0 + lin.a_mean * lam;
            let j22 = lin.eta_dpp_mean.max(0.0) * lam + s;
            let det = j11 * j22 - j12 * j21;
            let (b1, b2) = (x[idx], x[n + idx]);
            out[idx] = (j22 * b1 - j12 * b2) / det;
            out[n + idx] = (j11 * b2 - j21 * b1) / det;
        }
        out
    }

    fn solve_linear(&self, lin: &Linearization, rhs: &[C], kind: LinearSolver, rtol: f64) -> Result<(Vec<C>, usize)> {
        match kind {
            LinearSolver::Gmres => {
                let mut apply = |x: &[C]| self.jacobian(lin, x);
                let pre = |x: &[C]| self.precondition(lin, x);
                let out = gmres(&mut apply, &pre, rhs, GmresOptions { rtol, restart: 60, max_iter: 600 });
                if !out.relative_residual.is_finite() || out.relative_residual > 1e-2 {
                    return Err(Error::Validation(format!(
                        "GMRES stalled at relative residual {:.3e} after {} iterations",
                        out.relative_residual, out.iterations
                    )));
                }
                Ok((out.x, out.iterations))
            }
            LinearSolver::Dense => {
                if self.grid.dim() != 1 || self.grid.n() > 64 {
                    return Err(Error::config("the dense audit path is limited to 1-D grids with n <= 64"));
                }
                let size = rhs.len();
                let mut mat = DMatrix::<C>::zeros(size, size);
                let mut unit = vec![C::new(0.0, 0.0); size];
                for j in 0..size {
                    unit[j] = C::new(1.0, 0.0);
                    let col = self.jacobian(lin, &self.precondition(lin, &unit));
                    unit[j] = C::new(0.0, 0.0);
                    for (i, c) in col.into_iter().enumerate() {
                        mat[(i, j)] = c;
                    }
                }
                let b = nalgebra::DVector::from_column_slice(rhs);
                let y = mat
                    .lu()
                    .solve(&b)
                    .ok_or_else(|| Error::Validation("dense Jacobian is singular".into()))?;
                Ok((self.precondition(lin, y.as_slice()), size))
            }
        }
    }
}

/// Residual of the regularized system and its linearization, evaluated at a
/// pair; the linear map is applied to real direction pairs.
pub struct Assembled<'a> {
    system: System<'a>,
    lin: Linearization,
    pub residual: ResidualPair,
}

impl Assembled<'_> {
    /// Jacobian applied to the direction `(δη, δv)`.
    pub fn apply(&self, direction: &FieldPair) -> ResidualPair {
        let (r1, r2) =
            self.system.jacobian_real(&self.lin, direction.density.spectrum(), direction.value.spectrum());
        ResidualPair {
            hj: PeriodicField::from_spectrum(self.system.grid, r1),
            fp: PeriodicField::from_spectrum(self.system.grid, r2),
        }
    }

    /// Only the `σ(I + Δ^{2k})` part of the Jacobian.
    pub fn apply_stiff(&self, direction: &FieldPair) -> ResidualPair {
        let grid = self.system.grid;
        let f = |c: &[C]| {
            PeriodicField::from_spectrum(grid, c.iter().zip(&self.system.stiff).map(|(x, k)| k * x).collect())
        };
        ResidualPair { hj: f(direction.density.spectrum()), fp: f(direction.value.spectrum()) }
    }
}

/// Residual `A_σ(η, v)` and the Fréchet derivative at `(η, v)`.
pub fn assemble_residual_and_jacobian<'a>(
    pair: &FieldPair,
    model: &'a HamiltonianModel,
    params: &RegularizationParams,
) -> Result<Assembled<'a>> {
    let system = System::new(model, *params)?;
    let state = State::from_pair(pair);
    let (r1, r2) = system.residual(&state)?;
    let lin = system.linearize(&state)?;
    let residual = ResidualPair {
        hj: PeriodicField::from_spectrum(system.grid, r1),
        fp: PeriodicField::from_spectrum(system.grid, r2),
    };
    Ok(Assembled { system, lin, residual })
}

/// Relative error between the central difference `(R(w + hδ) − R(w − hδ))/2h`
/// and the Jacobian action `Jδ`, in the coefficient `ℓ²` norm.
pub fn jacobian_fd_error(
    pair: &FieldPair,
    direction: &FieldPair,
    model: &HamiltonianModel,
    params: &RegularizationParams,
    step: f64,
) -> Result<f64> {
    let system = System::new(model, *params)?;
    let s = State::from_pair(pair);
    let d = State::from_pair(direction);
    jacobian_error_at(&system, &s, &d, step)
}

fn jacobian_error_at(system: &System<'_>, s: &State, d: &State, step: f64) -> Result<f64> {
    let lin = system.linearize(s)?;
    let (j1, j2) = system.jacobian_real(&lin, &d.eta, &d.v);
    let (p1, p2) = system.residual(&s.axpy(step, d))?;
    let (m1, m2) = system.residual(&s.axpy(-step, d))?;
    let fd: Vec<C> = p1.iter().zip(&m1).chain(p2.iter().zip(&m2)).map(|(a, b)| (a - b) / (2.0 * step)).collect();
    let jd = join(j1, j2);
    let diff: Vec<C> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
    Ok(l2(&diff) / l2(&jd).max(f64::MIN_POSITIVE))
}

fn audit_direction(grid: Grid, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let de = PeriodicField::random_band_limited(grid, 4, 0.1, &mut rng);
    let dv = PeriodicField::random_band_limited(grid, 4, 0.1, &mut rng);
    State { eta: de.spectrum().to_vec(), v: dv.spectrum().to_vec() }
}

/// Damped Newton iteration for `A_σ(η, v) = 0` from `initial`.
///
/// Errors only on bad input (non-positive initial density, unsupported model,
/// invalid parameters); a solve that does not converge returns its last
/// iterate with `converged = false` and a failure reason.
pub fn newton_solve(
    model: &HamiltonianModel,
    params: &RegularizationParams,
    initial: &FieldPair,
    controls: &SolverControls,
) -> Result<(FieldPair, SolverReport)> {
    let system = System::new(model, *params)?;
    if initial.grid() != system.grid {
        return Err(Error::config("initial guess lives on a different grid than the model"));
    }
    initial.density.ensure_positive("initial density")?;
    if !(controls.tol > 0.0) || controls.max_iter == 0 {
        return Err(Error::parameter("solver needs tol > 0 and max_iter > 0"));
    }
    let mut state = State::from_pair(initial);
    let mut report = SolverReport {
        sigma: params.sigma,
        converged: false,
        iterations: 0,
        residual_history: Vec::new(),
        final_residual: f64::NAN,
        damping_history: Vec::new(),
        linear_iterations: Vec::new(),
        positivity_margin: f64::NAN,
        mass_residual: f64::NAN,
        jacobian_audit: None,
        failure: None,
    };
    let mut residual = system.residual(&state)?;
    for iter in 0..=controls.max_iter {
        let sup = system.sup_norm(&residual);
        report.residual_history.push(sup);
        report.final_residual = sup;
        report.iterations = iter;
        if sup <= controls.tol {
            report.converged = true;
            break;
        }
        if iter == controls.max_iter {
            report.failure = Some(format!("no convergence in {} iterations (residual {sup:.3e})", controls.max_iter));
            break;
        }
        let lin = match system.linearize(&state) {
            Ok(l) => l,
            Err(e) => {
                report.failure = Some(e.to_string());
                break;
            }
        };
        if controls.audit_jacobian {
            let d = audit_direction(system.grid, iter as u64);
            let err = jacobian_error_at(&system, &state, &d, 1e-6)?;
            report.jacobian_audit = Some(report.jacobian_audit.unwrap_or(0.0).max(err));
        }
        let norm0 = l2(&residual.0).hypot(l2(&residual.1));
        let rhs: Vec<C> = residual.0.iter().chain(&residual.1).map(|c| -c).collect();
        let rtol = norm0.clamp(1e-13, 1e-3);
        let (step, lin_iters) = match system.solve_linear(&lin, &rhs, controls.linear_solver, rtol) {
            Ok(v) => v,
            Err(e) => {
                report.failure = Some(format!("linear solver breakdown: {e}"));
                break;
            }
        };
        report.linear_iterations.push(lin_iters);
        let (de, dv) = split(&step);
        let dir = State { eta: de, v: dv };
        let mut t = 1.0;
        let accepted = loop {
            if t < controls.damping_floor {
                break None;
            }
            let trial = state.axpy(t, &dir);
            if let Ok(r) = system.residual(&trial) {
                let norm = l2(&r.0).hypot(l2(&r.1));
                if norm <= (1.0 - 1e-4 * t) * norm0 {
                    break Some((trial, r));
                }
            }
            t *= 0.5;
        };
        match accepted {
            Some((trial, r)) => {
                state = trial;
                residual = r;
                report.damping_history.push(t);
            }
            None => {
                report.failure = Some(format!("line search fell below the damping floor at residual {sup:.3e}"));
                break;
            }
        }
    }
    let pair = state.to_pair(system.grid);
    report.positivity_margin = pair.density.min();
    report.mass_residual = (pair.density.integrate() + params.sigma * pair.value.integrate() - 1.0).abs();
    Ok((pair, report))
}

/// One σ-stage of a continuation run.
#[derive(Clone, Debug)]
pub struct Stage {
    pub sigma: f64,
    pub pair: FieldPair,
    pub report: SolverReport,
}

/// All stages that were attempted; `failure` is set when a stage did not
/// converge and the remaining ones were skipped.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub stages: Vec<Stage>,
    pub failure: Option<String>,
}

impl Continuation {
    pub fn converged(&self) -> bool {
        self.failure.is_none() && self.stages.iter().all(|s| s.report.converged)
    }
}

/// Rejects empty schedules, values outside `(0, 1)` and non-decreasing steps.
pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::config("sigma schedule is empty"));
    }
    if let Some(s) = schedule.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(Error::config(format!("sigma schedule entry {s} outside (0, 1)")));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("sigma schedule must be strictly decreasing"));
    }
    Ok(())
}

/// Solves along a decreasing σ schedule, warm-starting every stage from the
/// previous solution.
pub fn sigma_continuation(
    model: &HamiltonianModel,
    schedule: &[f64],
    template: &RegularizationParams,
    initial: &FieldPair,
    controls: &SolverControls,
) -> Result<Continuation> {
    validate_schedule(schedule)?;
    let mut stages = Vec::with_capacity(schedule.len());
    let mut current = initial.clone();
    for &sigma in schedule {
        let params = template.with_sigma(sigma);
        let (pair, report) = newton_solve(model, &params, &current, controls)?;
        let ok = report.converged;
        let reason = report.failure.clone();
        current = pair.clone();
        stages.push(Stage { sigma, pair, report });
        if !ok {
            return Ok(Continuation {
                stages,
                failure: Some(format!("stage sigma = {sigma:e} failed: {}", reason.unwrap_or_default())),
            });
        }
    }
    Ok(Continuation { stages, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trivial(n: usize) -> HamiltonianModel {
        HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, Grid::new(1, n).unwrap()).unwrap()
    }

    fn v_model(n: usize) -> HamiltonianModel {
        let g = Grid::new(1, n).unwrap();
        let a = PeriodicField::trigonometric(g, 1.0, &[([1, 0], 0.1, 0.0)]).unwrap();
        let v = PeriodicField::trigonometric(g, 0.0, &[([1, 0], 0.1, 0.0)]).unwrap();
        HamiltonianModel::new(Family::QuadraticLog, a, VectorField::zeros(g), v).unwrap()
    }

    #[test]
    fn trivial_setup_converges_with_mass_identity() {
        let model = trivial(128);
        let g = model.grid();
        let params = RegularizationParams { sigma: 1e-2, k: 3, q: 2.0, blend: Blend::BumpSmoothStep };
        let init = FieldPair::constant(g, 1.2, 0.1);
        let (pair, report) = newton_solve(&model, &params, &init, &SolverControls::default()).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.mass_residual <= 1e-10);
        assert!((pair.density.values()[0] - 1.0).abs() < 1e-3);
        assert!(report.positivity_margin > 0.9);
    }

    #[test]
    fn nontrivial_potential_has_quadratic_tail() {
        let model = v_model(64);
        let params = RegularizationParams::defaults(1, 1e-2);
        let init = FieldPair::constant(model.grid(), 1.0, 0.0);
        let (_, report) = newton_solve(&model, &params, &init, &SolverControls::default()).unwrap();
        assert!(report.converged, "{report:?}");
        let h = &report.residual_history;
        assert!(h.len() >= 3);
        let n = h.len();
        // last contraction is much faster than linear
        assert!(h[n - 1] <= h[n - 2].powf(1.5) * 10.0 || h[n - 1] < 1e-14, "{h:?}");
    }

    #[test]
    fn dense_and_krylov_agree() {
        let model = v_model(32);
        let params = RegularizationParams::defaults(1, 5e-2);
        let init = FieldPair::constant(model.grid(), 1.0, 0.0);
        let mut c = SolverControls::default();
        let (a, _) = newton_solve(&model, &params, &init, &c).unwrap();
        c.linear_solver = LinearSolver::Dense;
        let (b, rep) = newton_solve(&model, &params, &init, &c).unwrap();
        assert!(rep.converged);
        assert!(a.l2_distance(&b) < 1e-10);
    }

    #[test]
    fn jacobian_matches_differences() {
        let model = v_model(64);
        let g = model.grid();
        let params = RegularizationParams::defaults(1, 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let eta = PeriodicField::random_band_limited(g, 4, 0.05, &mut rng).add(&PeriodicField::constant(g, 1.0));
            let v = PeriodicField::random_band_limited(g, 4, 0.1, &mut rng);
            let pair = FieldPair::new(eta, v).unwrap();
            let dir = FieldPair::new(
                PeriodicField::random_band_limited(g, 4, 0.1, &mut rng),
                PeriodicField::random_band_limited(g, 4, 0.1, &mut rng),
            )
            .unwrap();
            let err = jacobian_fd_error(&pair, &dir, &model, &params, 1e-6).unwrap();
            assert!(err <= 1e-6, "{err}");
        }
    }

    #[test]
    fn stiff_part_is_positive() {
        let model = trivial(32);
        let g = model.grid();
        let params = RegularizationParams::defaults(1, 0.1);
        let asm = assemble_residual_and_jacobian(&FieldPair::constant(g, 1.0, 0.0), &model, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = FieldPair::new(
            PeriodicField::random_band_limited(g, 3, 1.0, &mut rng),
            PeriodicField::random_band_limited(g, 3, 1.0, &mut rng),
        )
        .unwrap();
        let jw = asm.apply_stiff(&w);
        let lhs = w.density.inner(&jw.hj) + w.value.inner(&jw.fp);
        let rhs = 0.1
            * (w.density.inner(&w.density)
                + w.value.inner(&w.value)
                + w.density.laplacian_power_norm_sq(3).unwrap()
                + w.value.laplacian_power_norm_sq(3).unwrap());
        assert!(lhs > 0.0);
        assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        assert!(asm.residual.hj.values().iter().all(|x| (x - 0.1).abs() < 1e-14));
    }

    #[test]
    fn bad_inputs() {
        let model = trivial(32);
        let g = model.grid();
        let params = RegularizationParams::defaults(1, 0.1);
        let eta = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let bad = FieldPair::new(eta, PeriodicField::zeros(g)).unwrap();
        assert!(matches!(newton_solve(&model, &params, &bad, &SolverControls::default()), Err(Error::Domain(_))));
        let init = FieldPair::constant(g, 1.0, 0.0);
        let c = SolverControls::default();
        assert!(sigma_continuation(&model, &[], &params, &init, &c).is_err());
        assert!(sigma_continuation(&model, &[0.1, 0.2], &params, &init, &c).is_err());
        let cong = HamiltonianModel::with_unit_coefficients(Family::Congestion { gamma: 2.0, alpha: 1.0 }, g).unwrap();
        assert!(matches!(newton_solve(&cong, &params, &init, &c), Err(Error::Config(_))));
    }

    #[test]
    fn continuation_density_error_decreases() {
        let model = trivial(128);
        let g = model.grid();
        let params = RegularizationParams { sigma: 0.1, k: 3, q: 2.0, blend: Blend::BumpSmoothStep };
        let init = FieldPair::constant(g, 1.2, 0.1);
        let run = sigma_continuation(&model, &[1e-1, 1e-2, 1e-3], &params, &init, &SolverControls::default()).unwrap();
        assert!(run.converged());
        let errs: Vec<f64> = run
            .stages
            .iter()
            .map(|s| s.pair.density.map(|m| (m.sqrt() - 1.0).powi(2)).integrate())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
