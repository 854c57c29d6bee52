use std::sync::{Arc, OnceLock};

use rand::Rng;
use rustfft::num_complex::Complex64;

use super::{apply_laplacian_power, check_laplacian_power, spectral, Grid};
use crate::error::{Error, Result};

/// Real samples on a periodic grid.
///
/// A field remembers its Fourier coefficients once they are known. Fields
/// built from coefficients (or from linear combinations of such fields) keep
/// those coefficients exactly, which matters for the high Laplacian powers
/// used by the regularized system: re-transforming the samples would put
/// rounding noise into every mode, and `Δ^{2k}` amplifies that noise by up to
/// `(4π²|ξ|²)^{2k}`.
#[derive(Clone, Debug)]
pub struct PeriodicField {
    grid: Grid,
    values: Vec<f64>,
    spectrum: OnceLock<Arc<Vec<Complex64>>>,
}

impl PartialEq for PeriodicField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl PeriodicField {
    /// Wraps samples, rejecting non-finite values and length mismatches.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite sample {} at node {pos}", values[pos])));
        }
        Ok(Self::from_values_unchecked(grid, values))
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        PeriodicField { grid, values, spectrum: OnceLock::new() }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        spec[0] = Complex64::new(c, 0.0);
        let field = Self::from_values_unchecked(grid, vec![c; grid.len()]);
        let _ = field.spectrum.set(Arc::new(spec));
        field
    }

    /// Samples `f` at the grid nodes. In 1-D the second coordinate is 0.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.coords(idx))).collect();
        Self::from_values_unchecked(grid, values)
    }

    /// Builds a real field from Fourier coefficients (normalized convention of
    /// [`Grid`]); the coefficients are first projected onto the Hermitian
    /// subspace.
    pub fn from_spectrum(grid: Grid, mut spectrum: Vec<Complex64>) -> Self {
        assert_eq!(spectrum.len(), grid.len(), "spectrum length must match grid");
        spectral::hermitian_part(grid, &mut spectrum);
        let values = spectral::inverse_real(grid, &spectrum);
        let field = Self::from_values_unchecked(grid, values);
        let _ = field.spectrum.set(Arc::new(spectrum));
        field
    }

    /// Sum of `c + Σ (a_ξ cos 2πξ·x + b_ξ sin 2πξ·x)`, built spectrally.
    ///
    /// Each entry of `modes` is `(ξ, a_ξ, b_ξ)`; every `ξ` must lie strictly
    /// below the Nyquist frequency.
    pub fn trigonometric(grid: Grid, constant: f64, modes: &[([i64; 2], f64, f64)]) -> Result<Self> {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        spec[0] += constant;
        let half = (grid.n() / 2) as i64;
        for &(k, cos_amp, sin_amp) in modes {
            if k[0].abs() >= half || k[1].abs() >= half || (grid.dim() == 1 && k[1] != 0) {
                return Err(Error::config(format!(
                    "mode {k:?} not representable below Nyquist on a {}-point grid",
                    grid.n()
                )));
            }
            if k == [0, 0] {
                spec[0] += cos_amp;
                continue;
            }
            // a cos θ + b sin θ = ((a - ib)/2) e^{iθ} + ((a + ib)/2) e^{-iθ}
            let plus = grid.flat(k[0] as isize, k[1] as isize);
            let minus = grid.flat(-k[0] as isize, -k[1] as isize);
            spec[plus] += Complex64::new(cos_amp / 2.0, -sin_amp / 2.0);
            spec[minus] += Complex64::new(cos_amp / 2.0, sin_amp / 2.0);
        }
        Ok(Self::from_spectrum(grid, spec))
    }

    /// Random trigonometric polynomial with modes `|ξ_i| ≤ max_mode` and
    /// coefficients uniform in `[-amplitude, amplitude]`, zero mean.
    pub fn random_band_limited<R: Rng + ?Sized>(grid: Grid, max_mode: usize, amplitude: f64, rng: &mut R) -> Self {
        let max_mode = max_mode.min(grid.n() / 2 - 1) as i64;
        let mut modes = Vec::new();
        let second = if grid.dim() == 2 { max_mode } else { 0 };
        for k0 in 0..=max_mode {
            for k1 in -second..=second {
                // half-plane representatives
                if k0 == 0 && k1 <= 0 {
                    continue;
                }
                let a = rng.gen_range(-amplitude..=amplitude);
                let b = rng.gen_range(-amplitude..=amplitude);
                modes.push(([k0, k1], a, b));
            }
        }
        Self::trigonometric(grid, 0.0, &modes).expect("modes are below Nyquist by construction")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Normalized Fourier coefficients; cached after the first call.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| Arc::new(spectral::forward_real(self.grid, &self.values)))
            .as_slice()
    }

    fn known_spectrum(&self) -> Option<&Arc<Vec<Complex64>>> {
        self.spectrum.get()
    }

    pub(crate) fn check_grid(&self, other: &PeriodicField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::config(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Pointwise map; the result carries no cached spectrum.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        Self::from_values_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> PeriodicField {
        assert_eq!(self.grid, other.grid, "zip_map on mismatched grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_values_unchecked(self.grid, values)
    }

    /// `alpha * self + beta * other`, keeping exact coefficients when both
    /// operands have them.
    pub fn lincomb(&self, alpha: f64, other: &PeriodicField, beta: f64) -> PeriodicField {
        let out = self.zip_map(other, |a, b| alpha * a + beta * b);
        if let (Some(s), Some(o)) = (self.known_spectrum(), other.known_spectrum()) {
            let spec: Vec<Complex64> = s.iter().zip(o.iter()).map(|(a, b)| alpha * a + beta * b).collect();
            let _ = out.spectrum.set(Arc::new(spec));
        }
        out
    }

    pub fn add(&self, other: &PeriodicField) -> PeriodicField {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &PeriodicField) -> PeriodicField {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, alpha: f64) -> PeriodicField {
        let out = self.map(|v| alpha * v);
        if let Some(s) = self.known_spectrum() {
            let _ = out.spectrum.set(Arc::new(s.iter().map(|c| alpha * c).collect()));
        }
        out
    }

    /// Pointwise product.
    pub fn mul(&self, other: &PeriodicField) -> PeriodicField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Rejects fields with a nonpositive node; `what` names the field in the
    /// error message.
    pub fn ensure_positive(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|&v| !(v > 0.0)) {
            Some(pos) => Err(Error::domain(format!(
                "{what} must be positive, found {} at node {pos}",
                self.values[pos]
            ))),
            None => Ok(()),
        }
    }

    /// Grid quadrature `n^{-d} Σ f(x_j)`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.weight()
    }

    /// `∫ f g dx` under the grid quadrature.
    pub fn inner(&self, other: &PeriodicField) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product on mismatched grids");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.weight()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `∫ f g dx` evaluated through Parseval on the coefficients.
    pub fn spectral_inner(&self, other: &PeriodicField) -> f64 {
        self.spectrum().iter().zip(other.spectrum()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Applies a Fourier multiplier and returns the real part.
    pub(crate) fn apply_multiplier(&self, symbol: impl Fn(usize) -> Complex64) -> PeriodicField {
        let mut spec = self.spectrum().to_vec();
        super::apply_symbol(&mut spec, symbol);
        Self::from_spectrum(self.grid, spec)
    }

    /// Spectral partial derivative along `axis`.
    pub fn partial(&self, axis: usize) -> PeriodicField {
        assert!(axis < self.grid.dim(), "axis {axis} out of range");
        let grid = self.grid;
        self.apply_multiplier(|idx| grid.derivative_symbol(idx, axis))
    }

    pub fn gradient(&self) -> VectorField {
        VectorField {
            grid: self.grid,
            components: (0..self.grid.dim()).map(|axis| self.partial(axis)).collect(),
        }
    }

    /// `Δ^power f` via the multiplier `(-4π²|ξ|²)^power`.
    pub fn laplacian_power(&self, power: u32) -> Result<PeriodicField> {
        if power == 0 {
            return Err(Error::parameter("Laplacian power must be at least 1"));
        }
        check_laplacian_power(self.grid, power)?;
        let mut spec = self.spectrum().to_vec();
        apply_laplacian_power(self.grid, &mut spec, power);
        Ok(Self::from_spectrum(self.grid, spec))
    }

    pub fn laplacian(&self) -> PeriodicField {
        self.laplacian_power(1).expect("first Laplacian power never overflows")
    }

    /// `‖Δ^power f‖²_{L²}` computed on the coefficients.
    pub fn laplacian_power_norm_sq(&self, power: u32) -> Result<f64> {
        check_laplacian_power(self.grid, power)?;
        let grid = self.grid;
        Ok(self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(idx, c)| grid.laplacian_eigenvalue(idx).powi(2 * power as i32) * c.norm_sqr())
            .sum())
    }

    /// `(∫ f² + ∫ |Df|²)^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        let grad = self.gradient();
        (self.inner(self) + grad.inner(&grad)).sqrt()
    }
}

/// One [`PeriodicField`] per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<PeriodicField>,
}

impl VectorField {
    pub fn new(components: Vec<PeriodicField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::config("vector field needs at least one component"))?;
        let grid = first.grid();
        if components.len() != grid.dim() {
            return Err(Error::config(format!(
                "vector field has {} components on a {}-D grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            first.check_grid(c)?;
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, components: vec![PeriodicField::zeros(grid); grid.dim()] }
    }

    pub fn constant(grid: Grid, value: [f64; 2]) -> Self {
        VectorField {
            grid,
            components: (0..grid.dim()).map(|i| PeriodicField::constant(grid, value[i])).collect(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn components(&self) -> &[PeriodicField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &PeriodicField {
        &self.components[axis]
    }

    /// Vector of component values at one node (second entry 0 in 1-D).
    pub fn at(&self, idx: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (axis, c) in self.components.iter().enumerate() {
            out[axis] = c.values()[idx];
        }
        out
    }

    /// Builds a vector field from a node-wise closure.
    pub fn from_nodes(grid: Grid, f: impl Fn(usize) -> [f64; 2]) -> Self {
        let mut comps = vec![Vec::with_capacity(grid.len()); grid.dim()];
        for idx in 0..grid.len() {
            let v = f(idx);
            for (axis, comp) in comps.iter_mut().enumerate() {
                comp.push(v[axis]);
            }
        }
        VectorField {
            grid,
            components: comps.into_iter().map(|c| PeriodicField::from_values_unchecked(grid, c)).collect(),
        }
    }

    /// Spectral divergence; the negative adjoint of
    /// [`PeriodicField::gradient`] under grid quadrature.
    pub fn divergence(&self) -> PeriodicField {
        let grid = self.grid;
        let mut total = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (axis, comp) in self.components.iter().enumerate() {
            for (idx, (acc, c)) in total.iter_mut().zip(comp.spectrum()).enumerate() {
                *acc += grid.derivative_symbol(idx, axis) * c;
            }
        }
        PeriodicField::from_spectrum(grid, total)
    }

    /// Pointwise `v · w`.
    pub fn dot(&self, other: &VectorField) -> PeriodicField {
        let mut out = vec![0.0; self.grid.len()];
        for (a, b) in self.components.iter().zip(&other.components) {
            for (o, (x, y)) in out.iter_mut().zip(a.values().iter().zip(b.values())) {
                *o += x * y;
            }
        }
        PeriodicField::from_values_unchecked(self.grid, out)
    }

    /// Pointwise `|v|²`.
    pub fn norm_sq(&self) -> PeriodicField {
        self.dot(self)
    }

    /// `∫ v · w dx`.
    pub fn inner(&self, other: &VectorField) -> f64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a.inner(b)).sum()
    }

    /// Pointwise product with a scalar field.
    pub fn scale_by(&self, s: &PeriodicField) -> VectorField {
        VectorField { grid: self.grid, components: self.components.iter().map(|c| c.mul(s)).collect() }
    }

    pub fn lincomb(&self, alpha: f64, other: &VectorField, beta: f64) -> VectorField {
        VectorField {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.lincomb(alpha, b, beta))
                .collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.norm_sq().values().iter().fold(0.0, |m: f64, v| m.max(v.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g1(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        let g = g1(8);
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(PeriodicField::new(g, v), Err(Error::Domain(_))));
        assert!(PeriodicField::new(g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn gradient_of_sine() {
        let g = g1(64);
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let df = f.gradient();
        for (idx, v) in df.component(0).values().iter().enumerate() {
            let exact = 2.0 * PI * (2.0 * PI * g.coords(idx)[0]).cos();
            assert!((v - exact).abs() <= 1e-12 * 2.0 * PI, "node {idx}: {v} vs {exact}");
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = Grid::new(2, 16).unwrap();
        let f = PeriodicField::constant(g, 3.5);
        assert_eq!(f.gradient().sup_norm(), 0.0);
        assert_eq!(f.laplacian_power(6).unwrap().sup_norm(), 0.0);
        assert_eq!(VectorField::constant(g, [1.0, -2.0]).divergence().sup_norm(), 0.0);
    }

    #[test]
    fn laplacian_powers_of_sine() {
        let g = g1(64);
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let lam = 4.0 * PI * PI;
        let l1 = f.laplacian_power(1).unwrap();
        let l2 = f.laplacian_power(2).unwrap();
        for idx in 0..g.len() {
            let s = f.values()[idx];
            assert!((l1.values()[idx] + lam * s).abs() <= 1e-12 * lam);
            assert!((l2.values()[idx] - lam * lam * s).abs() <= 1e-12 * lam * lam);
        }
    }

    #[test]
    fn laplacian_power_overflow_guard() {
        let f = PeriodicField::constant(g1(1024), 1.0);
        assert!(matches!(f.laplacian_power(60), Err(Error::Resolution(_))));
        assert!(matches!(f.laplacian_power(0), Err(Error::Parameter(_))));
    }

    #[test]
    fn integrate_examples() {
        let g = g1(64);
        assert_eq!(PeriodicField::constant(g, 1.0).integrate(), 1.0);
        let s = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        assert!(s.integrate().abs() <= 1e-15);
        let c = PeriodicField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        assert!((c.integrate() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn h1_norm_examples() {
        let g = g1(64);
        assert_eq!(PeriodicField::zeros(g).h1_norm(), 0.0);
        assert!((PeriodicField::constant(g, -2.5).h1_norm() - 2.5).abs() < 1e-15);
        let s = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        // ∫ sin² = 1/2, ∫ (2π cos)² = 4π²/2, via a fine midpoint rule oracle
        let m = 200_000;
        let oracle: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                let (sv, cv) = ((2.0 * PI * x).sin(), 2.0 * PI * (2.0 * PI * x).cos());
                sv * sv + cv * cv
            })
            .sum::<f64>()
            / m as f64;
        assert!((s.h1_norm() - oracle.sqrt()).abs() <= 1e-10);
        assert!((s.h1_norm() - (0.5 + 2.0 * PI * PI).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn trigonometric_matches_samples() {
        let g = Grid::new(2, 16).unwrap();
        let f = PeriodicField::trigonometric(g, 1.0, &[([1, 2], 0.3, -0.2)]).unwrap();
        for idx in 0..g.len() {
            let [x, y] = g.coords(idx);
            let th = 2.0 * PI * (x + 2.0 * y);
            let exact = 1.0 + 0.3 * th.cos() - 0.2 * th.sin();
            assert!((f.values()[idx] - exact).abs() < 1e-14);
        }
        assert!(PeriodicField::trigonometric(g, 0.0, &[([8, 0], 1.0, 0.0)]).is_err());
    }

    #[test]
    fn lincomb_keeps_exact_spectrum() {
        let g = g1(128);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = PeriodicField::random_band_limited(g, 3, 0.1, &mut rng);
        let b = PeriodicField::constant(g, 1.0);
        let c = a.lincomb(2.0, &b, 0.5);
        // the highest modes stay exactly zero so Δ^6 sees no rounding noise
        assert_eq!(c.spectrum()[64], Complex64::new(0.0, 0.0));
        let l = c.laplacian_power(6).unwrap();
        let expected = a.laplacian_power(6).unwrap().scale(2.0);
        for (x, y) in l.values().iter().zip(expected.values()) {
            assert!((x - y).abs() <= 1e-13 * expected.sup_norm());
        }
    }

    #[test]
    fn spectral_inner_matches_quadrature() {
        let g = Grid::new(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = PeriodicField::random_band_limited(g, 4, 1.0, &mut rng);
        let b = PeriodicField::random_band_limited(g, 4, 1.0, &mut rng);
        assert!((a.inner(&b) - a.spectral_inner(&b)).abs() < 1e-13);
    }
}
