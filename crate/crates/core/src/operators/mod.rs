//! Residuals of the monotone operators, their duality pairing, monotonicity
//! gaps, the weak-solution inequality and the cancellation identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PeriodicField, SpaceTimeField};
use crate::model::{Family, HamiltonianModel};
use crate::mollify::{adapted_mollify, spatial_mollify};
use crate::solver::{beta_sigma, RegularizationParams};

/// A density–value pair `(η, v)`; `F` is a spatial or space-time field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair<F = PeriodicField> {
    pub density: F,
    pub value: F,
}

/// The two rows of an operator output: the Hamilton–Jacobi row and the
/// Fokker–Planck row.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPair<F = PeriodicField> {
    pub hj: F,
    pub fp: F,
}

pub type SpaceTimePair = FieldPair<SpaceTimeField>;

/// Fields that carry the `L²` pairing of the duality.
pub trait Dual {
    fn pair_with(&self, other: &Self) -> f64;
}

impl Dual for PeriodicField {
    fn pair_with(&self, other: &Self) -> f64 {
        self.inner(other)
    }
}

impl Dual for SpaceTimeField {
    fn pair_with(&self, other: &Self) -> f64 {
        self.inner(other)
    }
}

impl FieldPair {
    pub fn new(density: PeriodicField, value: PeriodicField) -> Result<Self> {
        density.check_grid(&value)?;
        Ok(FieldPair { density, value })
    }

    /// Constant pair `(m, u)`.
    pub fn constant(grid: Grid, m: f64, u: f64) -> Self {
        FieldPair { density: PeriodicField::constant(grid, m), value: PeriodicField::constant(grid, u) }
    }

    pub fn grid(&self) -> Grid {
        self.density.grid()
    }

    pub fn lincomb(&self, alpha: f64, other: &FieldPair, beta: f64) -> FieldPair {
        FieldPair {
            density: self.density.lincomb(alpha, &other.density, beta),
            value: self.value.lincomb(alpha, &other.value, beta),
        }
    }

    pub fn sub(&self, other: &FieldPair) -> FieldPair {
        self.lincomb(1.0, other, -1.0)
    }

    /// `(‖η₁ − η₂‖² + ‖v₁ − v₂‖²)^{1/2}` in `L²`.
    pub fn l2_distance(&self, other: &FieldPair) -> f64 {
        let d = self.sub(other);
        (d.density.inner(&d.density) + d.value.inner(&d.value)).sqrt()
    }
}

impl SpaceTimePair {
    pub fn new_spacetime(density: SpaceTimeField, value: SpaceTimeField) -> Result<Self> {
        density.check_shape(&value)?;
        Ok(FieldPair { density, value })
    }
}

impl ResidualPair {
    pub fn sub(&self, other: &ResidualPair) -> ResidualPair {
        ResidualPair { hj: self.hj.sub(&other.hj), fp: self.fp.sub(&other.fp) }
    }

    pub fn sup_norm(&self) -> f64 {
        self.hj.sup_norm().max(self.fp.sup_norm())
    }
}

/// `∫ (η η̃ + v ṽ)`, with the density paired against the Hamilton–Jacobi row
/// and the value against the Fokker–Planck row. Space-time fields integrate
/// by the trapezoid rule in time.
pub fn duality_pairing<F: Dual>(p1: &FieldPair<F>, p2: &ResidualPair<F>) -> f64 {
    p1.density.pair_with(&p2.hj) + p1.value.pair_with(&p2.fp)
}

/// Spatial part shared by every operator:
/// `(aΔv − H(x, Dv, η), −Δ(aη) − div(η D_pH))`.
fn spatial_rows(pair: &FieldPair, model: &HamiltonianModel) -> Result<ResidualPair> {
    if pair.grid() != model.grid() {
        return Err(Error::config("pair and model live on different grids"));
    }
    let eta = &pair.density;
    let v = &pair.value;
    let bundle = model.eval_fields(&v.gradient(), eta)?;
    let a = model.diffusion();
    let hj = a.mul(&v.laplacian()).sub(&bundle.h);
    let fp = a.mul(eta).laplacian().add(&bundle.dp.scale_by(eta).divergence()).scale(-1.0);
    Ok(ResidualPair { hj, fp })
}

/// The stationary operator `A(η, v)`:
/// `(−v + aΔv − H(x, Dv, η), (η − 1) − Δ(aη) − div(η D_pH))`.
pub fn apply_a(pair: &FieldPair, model: &HamiltonianModel) -> Result<ResidualPair> {
    let rows = spatial_rows(pair, model)?;
    let one = PeriodicField::constant(pair.grid(), 1.0);
    Ok(ResidualPair { hj: rows.hj.sub(&pair.value), fp: rows.fp.add(&pair.density.sub(&one)) })
}

/// The regularization terms `(σ(η + Δ^{2k}η) + β_σ(η), σ(v + Δ^{2k}v))`.
pub fn regularization_terms(pair: &FieldPair, params: &RegularizationParams) -> Result<ResidualPair> {
    pair.density.ensure_positive("density")?;
    let sigma = params.sigma;
    let power = 2 * params.k;
    let eta = &pair.density;
    let v = &pair.value;
    let beta = PeriodicField::new(
        eta.grid(),
        eta.values().iter().map(|&s| beta_sigma(s, params)).collect::<Result<_>>()?,
    )?;
    let hj = eta.add(&eta.laplacian_power(power)?).scale(sigma).add(&beta);
    let fp = v.add(&v.laplacian_power(power)?).scale(sigma);
    Ok(ResidualPair { hj, fp })
}

/// The regularized operator `A_σ = A + (σ(η + Δ^{2k}η) + β_σ(η), σ(v + Δ^{2k}v))`
/// for the quadratic–logarithmic model.
///
/// `σ = 0` is accepted here (the terms then reduce to `β_0 ≡ 0`), so the
/// reduction to `A` can be checked directly.
pub fn apply_a_sigma(pair: &FieldPair, model: &HamiltonianModel, params: &RegularizationParams) -> Result<ResidualPair> {
    if model.family() != Family::QuadraticLog {
        return Err(Error::config(format!(
            "the regularized operator is defined for the quadratic_log family, not {}",
            model.family().name()
        )));
    }
    pair.density.ensure_positive("density")?;
    let base = apply_a(pair, model)?;
    let reg = regularization_terms(pair, params)?;
    Ok(ResidualPair { hj: base.hj.add(&reg.hj), fp: base.fp.add(&reg.fp) })
}

/// The time-dependent operator `B(η, v)`:
/// `(v_t + aΔv − H(x, Dv, η), η_t − Δ(aη) − div(η D_pH))`.
pub fn apply_b(pair: &SpaceTimePair, model: &HamiltonianModel) -> Result<ResidualPair<SpaceTimeField>> {
    pair.density.check_shape(&pair.value)?;
    if pair.density.grid() != model.grid() {
        return Err(Error::config("pair and model live on different grids"));
    }
    let eta_t = pair.density.time_derivative();
    let v_t = pair.value.time_derivative();
    let horizon = pair.density.horizon();
    let mut hj = Vec::with_capacity(pair.density.steps() + 1);
    let mut fp = Vec::with_capacity(pair.density.steps() + 1);
    for level in 0..=pair.density.steps() {
        let slice = FieldPair { density: pair.density.slice(level).clone(), value: pair.value.slice(level).clone() };
        let rows = spatial_rows(&slice, model)?;
        hj.push(rows.hj.add(v_t.slice(level)));
        fp.push(rows.fp.add(eta_t.slice(level)));
    }
    Ok(ResidualPair { hj: SpaceTimeField::new(horizon, hj)?, fp: SpaceTimeField::new(horizon, fp)? })
}

/// Stationary operator used by [`monotonicity_gap`].
#[derive(Clone, Copy, Debug)]
pub enum Operator<'a> {
    A,
    ASigma(&'a RegularizationParams),
}

impl Operator<'_> {
    pub fn apply(&self, pair: &FieldPair, model: &HamiltonianModel) -> Result<ResidualPair> {
        match self {
            Operator::A => apply_a(pair, model),
            Operator::ASigma(p) => apply_a_sigma(pair, model, p),
        }
    }
}

/// `⟨w₁ − w₂, Op(w₁) − Op(w₂)⟩`.
pub fn monotonicity_gap(w1: &FieldPair, w2: &FieldPair, op: Operator<'_>, model: &HamiltonianModel) -> Result<f64> {
    let r1 = op.apply(w1, model)?;
    let r2 = op.apply(w2, model)?;
    Ok(duality_pairing(&w1.sub(w2), &r1.sub(&r2)))
}

/// `⟨w₁ − w₂, B(w₁) − B(w₂)⟩` over space and time.
pub fn monotonicity_gap_spacetime(w1: &SpaceTimePair, w2: &SpaceTimePair, model: &HamiltonianModel) -> Result<f64> {
    w1.density.check_shape(&w2.density)?;
    let r1 = apply_b(w1, model)?;
    let r2 = apply_b(w2, model)?;
    let diff = |a: &SpaceTimeField, b: &SpaceTimeField| -> Result<SpaceTimeField> {
        SpaceTimeField::new(a.horizon(), a.slices().iter().zip(b.slices()).map(|(x, y)| x.sub(y)).collect())
    };
    let dw = FieldPair { density: diff(&w1.density, &w2.density)?, value: diff(&w1.value, &w2.value)? };
    let dr = ResidualPair { hj: diff(&r1.hj, &r2.hj)?, fp: diff(&r1.fp, &r2.fp)? };
    Ok(duality_pairing(&dw, &dr))
}

/// Outcome of testing a candidate against a finite battery of smooth pairs.
///
/// A finite battery can only corroborate the weak inequality, never certify
/// it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakCheck {
    pub label: String,
    pub min_value: f64,
    pub argmin: usize,
    pub values: Vec<f64>,
}

impl WeakCheck {
    pub fn passes(&self, tau: f64) -> bool {
        self.min_value >= -tau
    }
}

/// `min_j ⟨(η_j, v_j) − (m̃, ũ), A(η_j, v_j)⟩` over the test pairs.
pub fn weak_inequality_check(candidate: &FieldPair, tests: &[FieldPair], model: &HamiltonianModel) -> Result<WeakCheck> {
    if tests.is_empty() {
        return Err(Error::config("weak inequality check needs at least one test pair"));
    }
    let values = tests
        .iter()
        .map(|t| Ok(duality_pairing(&t.sub(candidate), &apply_a(t, model)?)))
        .collect::<Result<Vec<f64>>>()?;
    let (argmin, min_value) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    Ok(WeakCheck { label: "corroboration".into(), min_value, argmin, values })
}

/// The two integrals `∫ m a Δv_δ` and `∫ Du · D(a η_δ)` whose sum vanishes,
/// with `η_δ = (1/a) θ_δ∗θ_δ∗(a m)` and `v_δ = θ_δ∗θ_δ∗u`.
pub fn cancellation_terms(a: &PeriodicField, m_diff: &PeriodicField, u_diff: &PeriodicField, delta: f64) -> Result<(f64, f64)> {
    a.check_grid(m_diff)?;
    a.check_grid(u_diff)?;
    let eta = adapted_mollify(a, m_diff, delta)?;
    let v = spatial_mollify(u_diff, delta, 2)?;
    let first = m_diff.mul(a).inner(&v.laplacian());
    let second = u_diff.gradient().inner(&a.mul(&eta).gradient());
    Ok((first, second))
}

/// `|∫ m a Δv_δ + ∫ Du · D(a η_δ)|`.
pub fn cancellation_residual(a: &PeriodicField, m_diff: &PeriodicField, u_diff: &PeriodicField, delta: f64) -> Result<f64> {
    let (first, second) = cancellation_terms(a, m_diff, u_diff, delta)?;
    Ok((first + second).abs())
}

/// Shape of the seeded test-pair battery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub count: usize,
    pub max_mode: usize,
    /// Largest density perturbation; must stay below 1.
    pub density_amplitude: f64,
    pub value_amplitude: f64,
    pub seed: u64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec { count: 50, max_mode: 3, density_amplitude: 0.5, value_amplitude: 0.2, seed: 0 }
    }
}

/// Seeded smooth positive test pairs of unit mass.
///
/// Densities are `1 + p` with `p` a random trigonometric polynomial scaled so
/// `|p| ≤ density_amplitude` at every node; positivity holds without
/// clipping, and the final division by the mass keeps the exact spectrum.
/// Values are random trigonometric polynomials with a random mean.
pub fn test_battery(grid: Grid, spec: &BatterySpec) -> Result<Vec<FieldPair>> {
    if !(spec.density_amplitude > 0.0 && spec.density_amplitude < 1.0) {
        return Err(Error::parameter(format!(
            "density amplitude must lie in (0, 1), got {}",
            spec.density_amplitude
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let one = PeriodicField::constant(grid, 1.0);
    (0..spec.count)
        .map(|_| {
            let raw = PeriodicField::random_band_limited(grid, spec.max_mode, 1.0, &mut rng);
            let level = rng.gen_range(0.2..=1.0) * spec.density_amplitude;
            let p = raw.scale(level / raw.sup_norm().max(f64::MIN_POSITIVE));
            let eta = one.add(&p);
            let eta = eta.scale(1.0 / eta.integrate());
            let mean = rng.gen_range(-spec.value_amplitude..=spec.value_amplitude);
            let v = PeriodicField::random_band_limited(grid, spec.max_mode, spec.value_amplitude, &mut rng)
                .add(&PeriodicField::constant(grid, mean));
            FieldPair::new(eta, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(1, 64).unwrap()
    }

    fn quad_log(g: Grid) -> HamiltonianModel {
        HamiltonianModel::with_unit_coefficients(Family::QuadraticLog, g).unwrap()
    }

    #[test]
    fn trivial_pair_is_a_zero() {
        let g = grid();
        let r = apply_a(&FieldPair::constant(g, 1.0, 0.0), &quad_log(g)).unwrap();
        assert!(r.sup_norm() <= 1e-12);
    }

    #[test]
    fn constant_value_shifts_first_row() {
        let g = grid();
        let r = apply_a(&FieldPair::constant(g, 1.0, 0.7), &quad_log(g)).unwrap();
        assert!(r.hj.values().iter().all(|v| (v + 0.7).abs() < 1e-14));
        assert!(r.fp.sup_norm() < 1e-14);
    }

    #[test]
    fn congestion_rejects_zero_density() {
        let g = grid();
        let model = HamiltonianModel::with_unit_coefficients(Family::Congestion { gamma: 2.0, alpha: 1.0 }, g).unwrap();
        let eta = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin().powi(2));
        let pair = FieldPair::new(eta, PeriodicField::zeros(g)).unwrap();
        assert!(matches!(apply_a(&pair, &model), Err(Error::Domain(_))));
    }

    #[test]
    fn regularized_at_trivial_pair() {
        let g = grid();
        let p = RegularizationParams { sigma: 1e-2, ..RegularizationParams::defaults(1, 1e-2) };
        let r = apply_a_sigma(&FieldPair::constant(g, 1.0, 0.0), &quad_log(g), &p).unwrap();
        assert!(r.hj.values().iter().all(|v| (v - 1e-2).abs() < 1e-15));
        assert!(r.fp.sup_norm() < 1e-15);
    }

    #[test]
    fn zero_sigma_reduces_to_a() {
        let g = grid();
        let model = quad_log(g);
        let battery = test_battery(g, &BatterySpec { count: 5, ..Default::default() }).unwrap();
        let p = RegularizationParams { sigma: 0.0, ..RegularizationParams::defaults(1, 0.1) };
        for pair in &battery {
            let d = apply_a_sigma(pair, &model, &p).unwrap().sub(&apply_a(pair, &model).unwrap());
            assert!(d.sup_norm() <= 1e-13);
        }
    }

    #[test]
    fn penalty_active_below_half_sigma() {
        let g = grid();
        let p = RegularizationParams::defaults(1, 0.4);
        let low = regularization_terms(&FieldPair::constant(g, 0.1, 0.0), &p).unwrap();
        assert!(low.hj.values().iter().all(|x| (x - (0.4 * 0.1 - 0.1f64.powf(-2.0))).abs() < 1e-12));
        let high = regularization_terms(&FieldPair::constant(g, 1.0, 0.0), &p).unwrap();
        assert!(high.hj.values().iter().all(|x| (x - 0.4).abs() < 1e-15));
    }

    #[test]
    fn b_with_linear_time_value() {
        let g = grid();
        let eta = SpaceTimeField::from_fn(g, 8, 1.0, |_, _| 1.0).unwrap();
        let v = SpaceTimeField::from_fn(g, 8, 1.0, |_, t| t).unwrap();
        let pair = SpaceTimePair::new_spacetime(eta, v).unwrap();
        let r = apply_b(&pair, &quad_log(g)).unwrap();
        for lvl in 0..=8 {
            assert!(r.hj.slice(lvl).values().iter().all(|x| (x - 1.0).abs() < 1e-12));
            assert!(r.fp.slice(lvl).sup_norm() < 1e-12);
        }
        let short = SpaceTimeField::from_fn(g, 4, 1.0, |_, _| 1.0).unwrap();
        assert!(SpaceTimePair::new_spacetime(short, pair.value.clone()).is_err());
    }

    #[test]
    fn pairing_basics() {
        let g = grid();
        let one = FieldPair::constant(g, 1.0, 1.0);
        let r = ResidualPair { hj: PeriodicField::constant(g, 1.0), fp: PeriodicField::constant(g, 1.0) };
        assert_eq!(duality_pairing(&one, &r), 2.0);
        let zero = ResidualPair { hj: PeriodicField::zeros(g), fp: PeriodicField::zeros(g) };
        assert_eq!(duality_pairing(&one, &zero), 0.0);
    }

    #[test]
    fn gap_of_identical_pairs_is_zero() {
        let g = grid();
        let model = quad_log(g);
        let w = test_battery(g, &BatterySpec { count: 1, ..Default::default() }).unwrap().remove(0);
        assert_eq!(monotonicity_gap(&w, &w, Operator::A, &model).unwrap(), 0.0);
    }

    #[test]
    fn weak_check_on_exact_zero() {
        let g = grid();
        let model = quad_log(g);
        let star = FieldPair::constant(g, 1.0, 0.0);
        let check = weak_inequality_check(&star, std::slice::from_ref(&star), &model).unwrap();
        assert_eq!(check.values[0], 0.0);
        assert_eq!(check.label, "corroboration");
    }

    #[test]
    fn battery_is_positive_with_unit_mass() {
        let g = Grid::new(2, 16).unwrap();
        for pair in test_battery(g, &BatterySpec { count: 10, seed: 3, ..Default::default() }).unwrap() {
            assert!(pair.density.min() > 0.0);
            assert!((pair.density.integrate() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cancellation_with_unit_coefficient() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = PeriodicField::random_band_limited(g, 6, 1.0, &mut rng);
        let u = PeriodicField::random_band_limited(g, 6, 1.0, &mut rng);
        let a = PeriodicField::constant(g, 1.0);
        let (t1, t2) = cancellation_terms(&a, &m, &u, 0.1).unwrap();
        assert!((t1 + t2).abs() <= 1e-11 * (t1.abs() + t2.abs()));
        assert_eq!(cancellation_residual(&a, &PeriodicField::zeros(g), &u, 0.1).unwrap(), 0.0);
    }
}
