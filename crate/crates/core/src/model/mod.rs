//! Hamiltonians with closed-form derivatives, the pointwise monotonicity
//! matrix, and the exponent checker.

mod exponents;

pub use exponents::{check_exponent_profile, ExponentFlags, ExponentProfile};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PeriodicField, VectorField};

/// Which closed-form Hamiltonian a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `(1+|p|²)^{γ/2}/γ − m^β`
    Power { gamma: f64, beta: f64 },
    /// `(1+|p|²)^{γ/2}/(γ m^α)`
    Congestion { gamma: f64, alpha: f64 },
    /// `|p|²/2 − Da·p + b·p + V − log m`
    QuadraticLog,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Power { .. } => "power",
            Family::Congestion { .. } => "congestion",
            Family::QuadraticLog => "quadratic_log",
        }
    }

    /// Whether `m = 0` is admissible.
    pub fn allows_zero_density(&self) -> bool {
        matches!(self, Family::Power { .. })
    }
}

/// A Hamiltonian together with the diffusion `a`, drift `b` and potential `V`
/// of the problem it belongs to.
#[derive(Clone, Debug)]
pub struct HamiltonianModel {
    family: Family,
    a: PeriodicField,
    da: VectorField,
    b: VectorField,
    potential: PeriodicField,
}

/// Values of `H` and its derivatives at one point. Unused trailing entries
/// are zero when `d = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianBundle {
    pub h: f64,
    pub dp: [f64; 2],
    pub dm: f64,
    pub dpp: [[f64; 2]; 2],
    pub dpm: [f64; 2],
}

/// Field-valued evaluation of a model along `(Dv, η)`.
#[derive(Clone, Debug)]
pub struct FieldBundle {
    pub h: PeriodicField,
    pub dp: VectorField,
    pub dm: PeriodicField,
    pub dpp: Vec<[[f64; 2]; 2]>,
    pub dpm: VectorField,
}

impl HamiltonianModel {
    pub fn new(family: Family, a: PeriodicField, b: VectorField, potential: PeriodicField) -> Result<Self> {
        a.check_grid(&potential)?;
        if b.grid() != a.grid() {
            return Err(Error::config("drift lives on a different grid"));
        }
        match family {
            Family::Power { gamma, beta } => {
                check_exponent("gamma", gamma, 1.0)?;
                check_exponent("beta", beta, 0.0)?;
            }
            Family::Congestion { gamma, alpha } => {
                check_exponent("gamma", gamma, 1.0)?;
                check_exponent("alpha", alpha, 0.0)?;
            }
            Family::QuadraticLog => {}
        }
        a.ensure_positive("diffusion coefficient a")?;
        let da = a.gradient();
        Ok(HamiltonianModel { family, a, da, b, potential })
    }

    /// `a ≡ 1`, `b ≡ 0`, `V ≡ 0`.
    pub fn with_unit_coefficients(family: Family, grid: Grid) -> Result<Self> {
        Self::new(
            family,
            PeriodicField::constant(grid, 1.0),
            VectorField::zeros(grid),
            PeriodicField::zeros(grid),
        )
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn grid(&self) -> Grid {
        self.a.grid()
    }

    pub fn diffusion(&self) -> &PeriodicField {
        &self.a
    }

    /// Spectral gradient of `a`.
    pub fn diffusion_gradient(&self) -> &VectorField {
        &self.da
    }

    pub fn drift(&self) -> &VectorField {
        &self.b
    }

    pub fn potential(&self) -> &PeriodicField {
        &self.potential
    }

    fn check_density(&self, m: f64) -> Result<()> {
        let ok = match self.family {
            Family::Power { beta, .. } => m > 0.0 || (m == 0.0 && beta >= 1.0),
            _ => m > 0.0,
        };
        if ok && m.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("density {m} is not admissible for the {} family", self.family.name())))
        }
    }

    /// `H` and its derivatives at node `node`, momentum `p`, density `m`.
    pub fn eval(&self, node: usize, p: [f64; 2], m: f64) -> Result<HamiltonianBundle> {
        self.check_density(m)?;
        let dim = self.grid().dim();
        let p = if dim == 1 { [p[0], 0.0] } else { p };
        let p2 = p[0] * p[0] + p[1] * p[1];
        let mut dpp = [[0.0; 2]; 2];
        let bundle = match self.family {
            Family::Power { gamma, beta } | Family::Congestion { gamma, alpha: beta } => {
                let s = 1.0 + p2;
                let c1 = s.powf(gamma / 2.0 - 1.0);
                let c2 = (gamma - 2.0) * s.powf(gamma / 2.0 - 2.0);
                for i in 0..dim {
                    for j in 0..dim {
                        dpp[i][j] = c2 * p[i] * p[j] + if i == j { c1 } else { 0.0 };
                    }
                }
                let kinetic = s.powf(gamma / 2.0) / gamma;
                if let Family::Power { .. } = self.family {
                    let dm = if beta == 1.0 { -1.0 } else { -beta * m.powf(beta - 1.0) };
                    HamiltonianBundle {
                        h: kinetic - m.powf(beta),
                        dp: [c1 * p[0], c1 * p[1]],
                        dm,
                        dpp,
                        dpm: [0.0; 2],
                    }
                } else {
                    let alpha = beta;
                    let w = m.powf(-alpha);
                    for row in dpp.iter_mut() {
                        for e in row.iter_mut() {
                            *e *= w;
                        }
                    }
                    let dpm_c = -alpha * c1 * w / m;
                    HamiltonianBundle {
                        h: kinetic * w,
                        dp: [c1 * p[0] * w, c1 * p[1] * w],
                        dm: -alpha * kinetic * w / m,
                        dpp,
                        dpm: [dpm_c * p[0], dpm_c * p[1]],
                    }
                }
            }
            Family::QuadraticLog => {
                let da = self.da.at(node);
                let b = self.b.at(node);
                let shift = [b[0] - da[0], b[1] - da[1]];
                for (i, row) in dpp.iter_mut().enumerate().take(dim) {
                    row[i] = 1.0;
                }
                HamiltonianBundle {
                    h: 0.5 * p2 + shift[0] * p[0] + shift[1] * p[1] + self.potential.values()[node] - m.ln(),
                    dp: [p[0] + shift[0], if dim == 2 { p[1] + shift[1] } else { 0.0 }],
                    dm: -1.0 / m,
                    dpp,
                    dpm: [0.0; 2],
                }
            }
        };
        Ok(bundle)
    }

    /// Evaluates the model at every node along momentum `p` and density `m`.
    pub fn eval_fields(&self, p: &VectorField, m: &PeriodicField) -> Result<FieldBundle> {
        let grid = self.grid();
        if p.grid() != grid || m.grid() != grid {
            return Err(Error::config("fields and model live on different grids"));
        }
        let dim = grid.dim();
        let n = grid.len();
        let mut h = Vec::with_capacity(n);
        let mut dm = Vec::with_capacity(n);
        let mut dp = vec![Vec::with_capacity(n); dim];
        let mut dpm = vec![Vec::with_capacity(n); dim];
        let mut dpp = Vec::with_capacity(n);
        for node in 0..n {
            let e = self.eval(node, p.at(node), m.values()[node])?;
            h.push(e.h);
            dm.push(e.dm);
            for axis in 0..dim {
                dp[axis].push(e.dp[axis]);
                dpm[axis].push(e.dpm[axis]);
            }
            dpp.push(e.dpp);
        }
        let vector = |cols: Vec<Vec<f64>>| -> Result<VectorField> {
            VectorField::new(cols.into_iter().map(|c| PeriodicField::new(grid, c)).collect::<Result<_>>()?)
        };
        Ok(FieldBundle {
            h: PeriodicField::new(grid, h)?,
            dp: vector(dp)?,
            dm: PeriodicField::new(grid, dm)?,
            dpp,
            dpm: vector(dpm)?,
        })
    }
}

fn check_exponent(name: &str, value: f64, lower: f64) -> Result<()> {
    if value > lower && value.is_finite() {
        Ok(())
    } else {
        Err(Error::parameter(format!("{name} must exceed {lower}, got {value}")))
    }
}

/// One sample point `(x, p, m)` for pointwise checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub node: usize,
    pub p: [f64; 2],
    pub m: f64,
}

/// Uniform random samples: node uniform, each momentum component in
/// `[-p_max, p_max]`, density log-uniform in `m_range`.
pub fn random_samples<R: Rng + ?Sized>(
    grid: Grid,
    count: usize,
    p_max: f64,
    m_range: (f64, f64),
    rng: &mut R,
) -> Vec<SamplePoint> {
    let (lo, hi) = (m_range.0.ln(), m_range.1.ln());
    (0..count)
        .map(|_| {
            let node = rng.gen_range(0..grid.len());
            let mut p = [0.0; 2];
            for c in p.iter_mut().take(grid.dim()) {
                *c = rng.gen_range(-p_max..=p_max);
            }
            let m = rng.gen_range(lo..=hi).exp();
            SamplePoint { node, p, m }
        })
        .collect()
}

/// Worst relative error between central finite differences and the analytic
/// derivatives over `samples` seeded samples.
///
/// Differences of `H` are compared to `D_pH` and `D_mH`; differences of
/// `D_pH` to `D²_ppH` and `D²_pmH`. Errors are relative to `max(1, |exact|)`.
pub fn verify_derivatives_fd<R: Rng + ?Sized>(
    model: &HamiltonianModel,
    samples: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::parameter(format!("finite-difference step must lie in [1e-7, 1e-3], got {step}")));
    }
    let dim = model.grid().dim();
    let points = random_samples(model.grid(), samples, 2.0, (0.2, 5.0), rng);
    let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for s in points {
        let e = model.eval(s.node, s.p, s.m)?;
        for axis in 0..dim {
            let mut hi = s.p;
            let mut lo = s.p;
            hi[axis] += step;
            lo[axis] -= step;
            let eh = model.eval(s.node, hi, s.m)?;
            let el = model.eval(s.node, lo, s.m)?;
            worst = worst.max(rel((eh.h - el.h) / (2.0 * step), e.dp[axis]));
            for i in 0..dim {
                worst = worst.max(rel((eh.dp[i] - el.dp[i]) / (2.0 * step), e.dpp[i][axis]));
            }
        }
        let eh = model.eval(s.node, s.p, s.m + step)?;
        let el = model.eval(s.node, s.p, s.m - step)?;
        worst = worst.max(rel((eh.h - el.h) / (2.0 * step), e.dm));
        for i in 0..dim {
            worst = worst.max(rel((eh.dp[i] - el.dp[i]) / (2.0 * step), e.dpm[i]));
        }
    }
    Ok(worst)
}

/// Smallest eigenvalue of the monotonicity matrix over a sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub min_eigenvalue: f64,
    pub witness: SamplePoint,
}

/// `[[m D²_ppH, ½ m D²_pmH], [½ m D²_pmHᵀ, −D_mH]]` at one sample.
pub fn monotonicity_matrix(model: &HamiltonianModel, s: &SamplePoint) -> Result<DMatrix<f64>> {
    let dim = model.grid().dim();
    let e = model.eval(s.node, s.p, s.m)?;
    let mut mat = DMatrix::zeros(dim + 1, dim + 1);
    for i in 0..dim {
        for j in 0..dim {
            mat[(i, j)] = s.m * e.dpp[i][j];
        }
        mat[(i, dim)] = 0.5 * s.m * e.dpm[i];
        mat[(dim, i)] = 0.5 * s.m * e.dpm[i];
    }
    mat[(dim, dim)] = -e.dm;
    Ok(mat)
}

pub fn monotonicity_matrix_min_eig(model: &HamiltonianModel, samples: &[SamplePoint]) -> Result<MonotonicityReport> {
    let mut best: Option<MonotonicityReport> = None;
    for s in samples {
        if !(s.m > 0.0) {
            return Err(Error::domain(format!("monotonicity samples need m > 0, got {}", s.m)));
        }
        let mat = monotonicity_matrix(model, s)?;
        let min = mat.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if best.is_none_or(|b| min < b.min_eigenvalue) {
            best = Some(MonotonicityReport { min_eigenvalue: min, witness: *s });
        }
    }
    best.ok_or_else(|| Error::config("monotonicity check needs at least one sample"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn power(grid: Grid, gamma: f64, beta: f64) -> HamiltonianModel {
        HamiltonianModel::with_unit_coefficients(Family::Power { gamma, beta }, grid).unwrap()
    }

    #[test]
    fn power_at_origin() {
        let g = Grid::new(1, 16).unwrap();
        let e = power(g, 2.0, 0.7).eval(0, [0.0, 0.0], 1.0).unwrap();
        assert!((e.h - (0.5 - 1.0)).abs() < 1e-15);
        assert_eq!(e.dp, [0.0, 0.0]);
        assert!((e.dm + 0.7).abs() < 1e-15);
    }

    #[test]
    fn congestion_even_in_p() {
        let g = Grid::new(2, 8).unwrap();
        for (gamma, alpha, m) in [(1.5, 0.3, 0.2), (3.0, 1.0, 4.0)] {
            let model = HamiltonianModel::with_unit_coefficients(Family::Congestion { gamma, alpha }, g).unwrap();
            assert_eq!(model.eval(3, [0.0, 0.0], m).unwrap().dp, [0.0, 0.0]);
        }
    }

    #[test]
    fn quadratic_log_at_rest() {
        let g = Grid::new(1, 16).unwrap();
        let model = HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, g).unwrap();
        let e = model.eval(5, [0.0, 0.0], 1.0).unwrap();
        assert_eq!(e.h, 0.0);
        assert_eq!(e.dm, -1.0);
    }

    #[test]
    fn density_domain() {
        let g = Grid::new(1, 16).unwrap();
        assert!(power(g, 2.0, 1.0).eval(0, [0.3, 0.0], 0.0).is_ok());
        assert!(matches!(power(g, 2.0, 0.5).eval(0, [0.3, 0.0], 0.0), Err(Error::Domain(_))));
        let c = HamiltonianModel::with_unit_coefficients(Family::Congestion { gamma: 2.0, alpha: 1.0 }, g).unwrap();
        assert!(matches!(c.eval(0, [0.0, 0.0], 0.0), Err(Error::Domain(_))));
        let q = HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, g).unwrap();
        assert!(matches!(q.eval(0, [0.0, 0.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bad_coefficients_rejected() {
        let g = Grid::new(1, 16).unwrap();
        let a = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!(HamiltonianModel::new(Family::QuadraticLog, a, VectorField::zeros(g), PeriodicField::zeros(g)).is_err());
        assert!(HamiltonianModel::with_unit_coefficients(Family::Power { gamma: 1.0, beta: 1.0 }, g).is_err());
    }

    #[test]
    fn fd_audit_all_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [1, 2] {
            let g = Grid::new(dim, 16).unwrap();
            let a = PeriodicField::from_fn(g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin());
            let b = VectorField::constant(g, [0.3, -0.2]);
            let v = PeriodicField::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).cos());
            for fam in [
                Family::Power { gamma: 2.0, beta: 1.0 },
                Family::Power { gamma: 3.5, beta: 0.4 },
                Family::Congestion { gamma: 1.5, alpha: 0.8 },
                Family::QuadraticLog,
            ] {
                let model = HamiltonianModel::new(fam, a.clone(), b.clone(), v.clone()).unwrap();
                let err = verify_derivatives_fd(&model, 100, 1e-5, &mut rng).unwrap();
                assert!(err <= 1e-6, "{fam:?} d={dim}: {err}");
            }
        }
        let g = Grid::new(1, 16).unwrap();
        assert!(matches!(verify_derivatives_fd(&power(g, 2.0, 1.0), 10, 0.0, &mut rng), Err(Error::Parameter(_))));
    }

    #[test]
    fn hessian_symmetric() {
        let g = Grid::new(2, 8).unwrap();
        let model = HamiltonianModel::with_unit_coefficients(Family::Congestion { gamma: 3.0, alpha: 0.5 }, g).unwrap();
        let e = model.eval(0, [0.7, -1.3], 2.0).unwrap();
        assert_eq!(e.dpp[0][1], e.dpp[1][0]);
    }

    #[test]
    fn monotonicity_closed_forms() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 8).unwrap();
            let s = SamplePoint { node: 0, p: [0.0, 0.0], m: 1.0 };
            let rep = monotonicity_matrix_min_eig(&power(g, 2.0, 1.0), &[s]).unwrap();
            assert!((rep.min_eigenvalue - 1.0).abs() < 1e-14);
            let q = HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, g).unwrap();
            let s = SamplePoint { node: 2, p: [3.0, -1.0], m: 1.0 };
            let rep = monotonicity_matrix_min_eig(&q, &[s]).unwrap();
            assert!((rep.min_eigenvalue - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn monotonicity_witness_is_the_worst_sample() {
        let g = Grid::new(1, 8).unwrap();
        let q = HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, g).unwrap();
        let samples: Vec<_> = [0.5, 4.0, 2.0]
            .iter()
            .map(|&m| SamplePoint { node: 0, p: [0.1, 0.0], m })
            .collect();
        let rep = monotonicity_matrix_min_eig(&q, &samples).unwrap();
        assert_eq!(rep.witness.m, 4.0);
        assert!((rep.min_eigenvalue - 0.25).abs() < 1e-14);
        assert!(monotonicity_matrix_min_eig(&q, &[]).is_err());
        let bad = [SamplePoint { node: 0, p: [0.0; 2], m: 0.0 }];
        assert!(matches!(monotonicity_matrix_min_eig(&q, &bad), Err(Error::Domain(_))));
    }
}
