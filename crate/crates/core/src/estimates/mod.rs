//! Estimate functionals along a σ-sweep and the convergence-rate fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PeriodicField;
use crate::operators::FieldPair;
use crate::solver::{beta_sigma, beta_sigma_prime, RegularizationParams};

/// First-order functionals at one σ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderRow {
    /// `∫ m log m`
    pub entropy: f64,
    /// `∫ log m`
    pub log_integral: f64,
    /// `∫ m`
    pub mass: f64,
    /// `∫ (m + 1)|Du|²/2`
    pub kinetic: f64,
    /// `∫ −β_σ(m)`
    pub penalty: f64,
    /// `∫ β_σ(m)(m − σ)`
    pub penalty_weighted: f64,
    /// `σ(‖u‖² + ‖Δ^k u‖² + ‖m‖² + ‖Δ^k m‖²)`
    pub sigma_terms: f64,
}

/// Second-order functionals at one σ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderRow {
    /// `∫ m |D²u|²`
    pub hessian: f64,
    /// `½ ∫ |Dm|²/m`
    pub fisher: f64,
    /// `∫ β′_σ(m)|Dm|²`
    pub penalty_gradient: f64,
    /// `σ ∫ (|Du|² + |Δ^k Du|² + |Dm|² + |Δ^k Dm|²)`
    pub sigma_terms: f64,
    /// `‖Da‖_∞ < 1`
    pub small_diffusion_gradient: bool,
}

fn check_pair(m: &PeriodicField, u: &PeriodicField) -> Result<()> {
    m.check_grid(u)?;
    m.ensure_positive("density")
}

fn penalty_fields(m: &PeriodicField, params: &RegularizationParams) -> Result<(PeriodicField, PeriodicField)> {
    let b = m.values().iter().map(|&s| beta_sigma(s, params)).collect::<Result<Vec<_>>>()?;
    let bp = m.values().iter().map(|&s| beta_sigma_prime(s, params)).collect::<Result<Vec<_>>>()?;
    Ok((PeriodicField::new(m.grid(), b)?, PeriodicField::new(m.grid(), bp)?))
}

pub fn first_order_report(m: &PeriodicField, u: &PeriodicField, params: &RegularizationParams) -> Result<FirstOrderRow> {
    check_pair(m, u)?;
    let sigma = params.sigma;
    let (beta, _) = penalty_fields(m, params)?;
    let du2 = u.gradient().norm_sq();
    let k = params.k;
    Ok(FirstOrderRow {
        entropy: m.map(|x| x * x.ln()).integrate(),
        log_integral: m.map(f64::ln).integrate(),
        mass: m.integrate(),
        kinetic: m.map(|x| x + 1.0).mul(&du2).integrate() / 2.0,
        penalty: -beta.integrate(),
        penalty_weighted: beta.zip_map(m, |b, x| b * (x - sigma)).integrate(),
        sigma_terms: sigma
            * (u.inner(u) + u.laplacian_power_norm_sq(k)? + m.inner(m) + m.laplacian_power_norm_sq(k)?),
    })
}

fn grad_power_norm_sq(f: &PeriodicField, k: u32) -> Result<f64> {
    let g = f.laplacian_power(k)?.gradient();
    Ok(g.inner(&g))
}

pub fn second_order_report(
    m: &PeriodicField,
    u: &PeriodicField,
    a: &PeriodicField,
    params: &RegularizationParams,
) -> Result<SecondOrderRow> {
    check_pair(m, u)?;
    m.check_grid(a)?;
    let dim = m.grid().dim();
    let du = u.gradient();
    let mut hess = PeriodicField::zeros(m.grid());
    for i in 0..dim {
        for j in 0..dim {
            let d = du.component(i).partial(j);
            hess = hess.add(&d.mul(&d));
        }
    }
    let dm = m.gradient();
    let dm2 = dm.norm_sq();
    let (_, beta_prime) = penalty_fields(m, params)?;
    let k = params.k;
    Ok(SecondOrderRow {
        hessian: m.mul(&hess).integrate(),
        fisher: dm2.zip_map(m, |g, x| g / x).integrate() / 2.0,
        penalty_gradient: beta_prime.mul(&dm2).integrate(),
        sigma_terms: params.sigma
            * (du.inner(&du) + grad_power_norm_sq(u, k)? + dm.inner(&dm) + grad_power_norm_sq(m, k)?),
        small_diffusion_gradient: a.gradient().sup_norm() < 1.0,
    })
}

/// `sup_{s>0} (s − δ s log s)`, by golden-section search in `log s`.
pub fn entropy_constant(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::parameter(format!("entropy weight delta must be positive, got {delta}")));
    }
    let g = |x: f64| {
        let s = x.exp();
        s - delta * s * x
    };
    // the maximizer is s = e^{1/δ − 1}
    let (mut lo, mut hi) = (-60.0f64, 1.0 / delta + 60.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = g(x1);
        }
    }
    Ok(f1.max(f2))
}

/// Both sides of `max(∫m, ∫log m) ≤ C_δ + δ ∫ m log m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyCheck {
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub c_delta: f64,
    pub passes: bool,
}

pub fn entropy_bound_check(m: &PeriodicField, delta: f64) -> Result<EntropyCheck> {
    let c_delta = entropy_constant(delta)?;
    m.ensure_positive("density")?;
    let lhs = m.integrate().max(m.map(f64::ln).integrate());
    let rhs = c_delta + delta * m.map(|x| x * x.ln()).integrate();
    // equality is attained at m ≡ e^{1/δ−1}; allow rounding in the quadrature
    let passes = lhs <= rhs + 1e-12 * rhs.abs().max(1.0);
    Ok(EntropyCheck { delta, lhs, rhs, c_delta, passes })
}

/// `|∫m + σ∫u − 1|`.
pub fn mass_identity_residual(m: &PeriodicField, u: &PeriodicField, sigma: f64) -> Result<f64> {
    m.check_grid(u)?;
    Ok((m.integrate() + sigma * u.integrate() - 1.0).abs())
}

/// `(a − b)(log a − log b) − 4(√a − √b)²`, nonnegative for `a, b > 0`.
pub fn elementary_gap(a: f64, b: f64) -> f64 {
    (a - b) * (a.ln() - b.ln()) - 4.0 * (a.sqrt() - b.sqrt()).powi(2)
}

/// Smallest [`elementary_gap`] on a `side × side` log-spaced grid over
/// `[lo, hi]²`.
pub fn elementary_sweep(lo: f64, hi: f64, side: usize) -> f64 {
    let pts: Vec<f64> = (0..side)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (side - 1).max(1) as f64).exp())
        .collect();
    pts.iter()
        .flat_map(|&a| pts.iter().map(move |&b| elementary_gap(a, b)))
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares line through `(log σ, log error)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn fit_log_log(sigmas: &[f64], errors: &[f64]) -> Result<RateFit> {
    if sigmas.len() < 3 || sigmas.len() != errors.len() {
        return Err(Error::config("a rate fit needs at least 3 matching points"));
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit { slope, intercept, residual })
}

/// Errors along a sweep against a reference pair, and the fitted rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub sigmas: Vec<f64>,
    /// `‖√m_σ − √m*‖²`
    pub density_errors: Vec<f64>,
    /// `‖u_σ − u*‖_{W^{1,2}}`
    pub value_errors: Vec<f64>,
    /// `None` when some error vanishes and the logarithm is meaningless.
    pub fit: Option<RateFit>,
    pub degenerate: bool,
    pub value_errors_decreasing: bool,
    /// `∫(m_σ − m*)(log m_σ − log m*) − 4‖√m_σ − √m*‖²` per stage.
    pub elementary_audit: Vec<f64>,
}

/// Errors below this are treated as exact agreement.
const DEGENERATE_ERROR: f64 = 1e-30;

pub fn convergence_rate_fit(stages: &[(f64, FieldPair)], reference: &FieldPair) -> Result<ConvergenceReport> {
    if stages.len() < 3 {
        return Err(Error::config(format!("rate fit needs at least 3 stages, got {}", stages.len())));
    }
    reference.density.ensure_positive("reference density")?;
    let sqrt_ref = reference.density.map(f64::sqrt);
    let log_ref = reference.density.map(f64::ln);
    let mut density_errors = Vec::new();
    let mut value_errors = Vec::new();
    let mut elementary_audit = Vec::new();
    for (_, pair) in stages {
        pair.density.check_grid(&reference.density)?;
        pair.density.ensure_positive("stage density")?;
        let dsq = pair.density.map(f64::sqrt).sub(&sqrt_ref);
        let err = dsq.inner(&dsq);
        density_errors.push(err);
        value_errors.push(pair.value.sub(&reference.value).h1_norm());
        let lhs = pair.density.sub(&reference.density).inner(&pair.density.map(f64::ln).sub(&log_ref));
        elementary_audit.push(lhs - 4.0 * err);
    }
    let sigmas: Vec<f64> = stages.iter().map(|(s, _)| *s).collect();
    let degenerate = density_errors.iter().any(|e| !(*e > DEGENERATE_ERROR));
    let fit = if degenerate { None } else { Some(fit_log_log(&sigmas, &density_errors)?) };
    let value_errors_decreasing = value_errors.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        sigmas,
        density_errors,
        value_errors,
        fit,
        degenerate,
        value_errors_decreasing,
        elementary_audit,
    })
}

/// All functionals at one σ, plus `‖√m‖_{W^{1,2}}` and `‖u‖_{W^{1,2}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub sigma: f64,
    pub first: FirstOrderRow,
    pub second: SecondOrderRow,
    pub sqrt_m_h1: f64,
    pub u_h1: f64,
}

impl EstimateRow {
    pub fn compute(pair: &FieldPair, a: &PeriodicField, params: &RegularizationParams) -> Result<Self> {
        Ok(EstimateRow {
            sigma: params.sigma,
            first: first_order_report(&pair.density, &pair.value, params)?,
            second: second_order_report(&pair.density, &pair.value, a, params)?,
            sqrt_m_h1: pair.density.map(f64::sqrt).h1_norm(),
            u_h1: pair.value.h1_norm(),
        })
    }

    /// Every numeric functional with a stable name.
    pub fn functionals(&self) -> Vec<(&'static str, f64)> {
        let f = &self.first;
        let s = &self.second;
        vec![
            ("entropy", f.entropy),
            ("log_integral", f.log_integral),
            ("mass", f.mass),
            ("kinetic", f.kinetic),
            ("penalty", f.penalty),
            ("penalty_weighted", f.penalty_weighted),
            ("sigma_terms_1", f.sigma_terms),
            ("hessian", s.hessian),
            ("fisher", s.fisher),
            ("penalty_gradient", s.penalty_gradient),
            ("sigma_terms_2", s.sigma_terms),
            ("sqrt_m_h1", self.sqrt_m_h1),
            ("u_h1", self.u_h1),
        ]
    }
}

/// Rows of a σ-sweep, largest σ first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub rows: Vec<EstimateRow>,
}

/// `max_σ |f| ≤ 10 |f(σ_max)| + 1`.
pub fn uniform(values: &[f64]) -> bool {
    match values.first() {
        None => true,
        Some(first) => values.iter().all(|v| v.is_finite() && v.abs() <= 10.0 * first.abs() + 1.0),
    }
}

impl EstimateReport {
    /// Uniformity verdict per functional.
    pub fn uniformity(&self) -> Vec<(&'static str, bool)> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        first
            .functionals()
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let column: Vec<f64> = self.rows.iter().map(|r| r.functionals()[i].1).collect();
                (*name, uniform(&column))
            })
            .collect()
    }

    pub fn sigma_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sigma < w[0].sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::{E, PI};

    fn grid() -> Grid {
        Grid::new(1, 64).unwrap()
    }

    fn params(sigma: f64) -> RegularizationParams {
        RegularizationParams::defaults(1, sigma)
    }

    #[test]
    fn first_order_at_rest() {
        let g = grid();
        let row = first_order_report(&PeriodicField::constant(g, 1.0), &PeriodicField::zeros(g), &params(0.1)).unwrap();
        assert_eq!(row.entropy, 0.0);
        assert_eq!(row.log_integral, 0.0);
        assert_eq!(row.kinetic, 0.0);
        assert!((row.sigma_terms - 0.1).abs() < 1e-16);
        let row = first_order_report(&PeriodicField::constant(g, 2.0), &PeriodicField::zeros(g), &params(0.1)).unwrap();
        assert!((row.entropy - 2.0 * 2f64.ln()).abs() < 1e-15);
        let bad = PeriodicField::from_fn(g, |x| x[0] - 0.5);
        assert!(matches!(first_order_report(&bad, &PeriodicField::zeros(g), &params(0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn second_order_fisher_against_quadrature() {
        let g = grid();
        let m = PeriodicField::trigonometric(g, 1.0, &[([1, 0], 0.1, 0.0)]).unwrap();
        let one = PeriodicField::constant(g, 1.0);
        let row = second_order_report(&m, &PeriodicField::zeros(g), &one, &params(0.1)).unwrap();
        let n = 4096;
        let oracle: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                let dm = -0.2 * PI * (2.0 * PI * x).sin();
                dm * dm / (1.0 + 0.1 * (2.0 * PI * x).cos())
            })
            .sum::<f64>()
            / n as f64
            / 2.0;
        assert!((row.fisher - oracle).abs() <= 1e-10, "{} vs {oracle}", row.fisher);
        assert_eq!(row.hessian, 0.0);
        assert!(row.small_diffusion_gradient);
    }

    #[test]
    fn second_order_flag_and_rest() {
        let g = grid();
        let steep = PeriodicField::trigonometric(g, 1.0, &[([1, 0], 0.0, 1.5 / (2.0 * PI) * 0.5)]).unwrap();
        let row = second_order_report(&PeriodicField::constant(g, 1.0), &PeriodicField::zeros(g), &steep, &params(0.1)).unwrap();
        assert!(row.small_diffusion_gradient);
        let steep = PeriodicField::trigonometric(g, 1.0, &[([1, 0], 0.0, 1.5 / (2.0 * PI))]).unwrap();
        let row = second_order_report(&PeriodicField::constant(g, 1.0), &PeriodicField::zeros(g), &steep, &params(0.1)).unwrap();
        assert!(!row.small_diffusion_gradient);
        assert_eq!((row.hessian, row.fisher, row.penalty_gradient, row.sigma_terms), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn entropy_constant_closed_form() {
        for delta in [1.0, 0.5, 0.25, 2.0] {
            let c = entropy_constant(delta).unwrap();
            let closed = delta * (1.0 / delta - 1.0).exp();
            assert!((c - closed).abs() <= 1e-12 * closed, "{delta}: {c} vs {closed}");
        }
        assert!(matches!(entropy_constant(0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn entropy_checks() {
        let g = grid();
        let one = entropy_bound_check(&PeriodicField::constant(g, 1.0), 1.0).unwrap();
        assert_eq!(one.lhs, 1.0);
        assert!(one.passes && one.rhs >= 1.0 - 1e-12);
        let e = entropy_bound_check(&PeriodicField::constant(g, E), 0.5).unwrap();
        assert!(e.passes);
        assert!(entropy_bound_check(&PeriodicField::constant(g, 1.0), -1.0).is_err());
    }

    #[test]
    fn mass_identity_examples() {
        let g = grid();
        let one = PeriodicField::constant(g, 1.0);
        assert_eq!(mass_identity_residual(&one, &PeriodicField::zeros(g), 0.3).unwrap(), 0.0);
        assert!((mass_identity_residual(&one, &one, 0.1).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn elementary_inequality_sweep() {
        assert!(elementary_sweep(1e-3, 1e3, 100) >= -1e-12);
        assert_eq!(elementary_gap(2.0, 2.0), 0.0);
    }

    #[test]
    fn rate_fit_recovers_power_law() {
        let s = [1e-1, 1e-2, 1e-3];
        let e: Vec<f64> = s.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_log_log(&s, &e).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(fit_log_log(&s[..2], &e[..2]).is_err());
    }

    #[test]
    fn degenerate_reference() {
        let g = grid();
        let stages: Vec<(f64, FieldPair)> = [0.3, 0.2, 0.1]
            .iter()
            .map(|&s| (s, FieldPair::constant(g, 1.0 + s, s)))
            .collect();
        let reference = stages[2].1.clone();
        let rep = convergence_rate_fit(&stages, &reference).unwrap();
        assert!(rep.degenerate && rep.fit.is_none());
        assert!(rep.elementary_audit.iter().all(|v| *v >= -1e-10));
        assert!(convergence_rate_fit(&stages[..2], &reference).is_err());
    }

    #[test]
    fn uniformity_rule() {
        assert!(uniform(&[1.0, 5.0, 11.0]));
        assert!(!uniform(&[1.0, 5.0, 11.5]));
        assert!(uniform(&[-0.5, 2.0]));
    }
}
