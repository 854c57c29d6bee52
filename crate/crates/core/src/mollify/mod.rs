//! Mollification toolkit.
//!
//! Spatial mollifiers act on the torus as Fourier multipliers built from a
//! discretely normalized bump, so every symmetry identity holds to rounding
//! error. Time mollifiers are one-sided and applied by direct quadrature on a
//! uniform time grid; their support arithmetic is exact.

mod time;

pub use time::{
    boundary_compatible_approx, one_sided_time_mollify, zero_extend_time, OneSidedKernel, TimeDirection,
    TimeSeries, ZeroExtension,
};

use crate::error::{Error, Result};
use crate::grid::{Complex64, Grid, PeriodicField};

/// The standard bump `exp(-1/(1-r²))` on `|r| < 1`, zero elsewhere.
pub fn bump(r: f64) -> f64 {
    let r2 = r * r;
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Widths used by the mollification constructions.
///
/// `delta` is the spatial width, `rho` the one-sided time width, `h` the time
/// shift and `lambda` the space-time width of the boundary-compatible
/// approximation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MollifierParams {
    pub delta: f64,
    pub rho: f64,
    pub h: f64,
    pub lambda: f64,
}

impl MollifierParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("rho", self.rho), ("h", self.h), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::parameter(format!("{name} must be positive, got {v}")));
            }
        }
        check_delta(self.delta)?;
        if !(self.lambda < self.h / 2.0) {
            return Err(Error::parameter(format!(
                "lambda = {} must be below h/2 = {}",
                self.lambda,
                self.h / 2.0
            )));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::parameter(format!("spatial width must lie in (0, 1/2), got {delta}")));
    }
    Ok(())
}

/// Fourier symbol of the periodized spatial kernel `θ_δ`.
///
/// The kernel is sampled at the nodes (radial bump of radius `delta`, wrapped
/// distance) and normalized so its grid integral is exactly one. Because the
/// samples are even, the symbol is real.
pub fn spatial_kernel_symbol(grid: Grid, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let samples: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let x = grid.coords(idx);
            let mut r2 = 0.0;
            for xi in x.iter().take(grid.dim()) {
                let w = if *xi > 0.5 { xi - 1.0 } else { *xi };
                r2 += w * w;
            }
            bump(r2.sqrt() / delta)
        })
        .collect();
    let mass: f64 = samples.iter().sum::<f64>() * grid.weight();
    let kernel = PeriodicField::new(grid, samples.iter().map(|s| s / mass).collect())?;
    // ∫ θ(x - y) g(y) dy has symbol θ̂(ξ) = Σ_j θ(x_j) e^{-2πiξx_j} / N
    Ok(kernel.spectrum().iter().map(|c| c.re).collect())
}

fn convolve(f: &PeriodicField, symbol: &[f64], passes: u32) -> PeriodicField {
    let spec: Vec<Complex64> = f
        .spectrum()
        .iter()
        .zip(symbol)
        .map(|(c, s)| c * s.powi(passes as i32))
        .collect();
    PeriodicField::from_spectrum(f.grid(), spec)
}

/// Periodic convolution with `θ_δ` (`passes = 1`) or `θ_δ ∗ θ_δ`
/// (`passes = 2`).
pub fn spatial_mollify(f: &PeriodicField, delta: f64, passes: u32) -> Result<PeriodicField> {
    if passes != 1 && passes != 2 {
        return Err(Error::parameter(format!("passes must be 1 or 2, got {passes}")));
    }
    let symbol = spatial_kernel_symbol(f.grid(), delta)?;
    Ok(convolve(f, &symbol, passes))
}

/// `∫ f (θ_δ ∗ g) - ∫ (θ_δ ∗ f) g`, which vanishes for a symmetric kernel.
pub fn symmetry_pairing_residual(f: &PeriodicField, g: &PeriodicField, delta: f64) -> Result<f64> {
    f.check_grid(g)?;
    let symbol = spatial_kernel_symbol(f.grid(), delta)?;
    let tg = convolve(g, &symbol, 1);
    let tf = convolve(f, &symbol, 1);
    Ok(f.inner(&tg) - tf.inner(g))
}

/// Coefficient-adapted double mollification `(1/a) θ_δ ∗ θ_δ ∗ (a f)`.
pub fn adapted_mollify(a: &PeriodicField, f: &PeriodicField, delta: f64) -> Result<PeriodicField> {
    a.check_grid(f)?;
    a.ensure_positive("diffusion coefficient a")?;
    let smoothed = spatial_mollify(&a.mul(f), delta, 2)?;
    Ok(smoothed.zip_map(a, |s, av| s / av))
}
