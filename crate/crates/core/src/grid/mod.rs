//! Uniform periodic grids on the unit torus `T^d`, `d ∈ {1, 2}`, with
//! Fourier spectral calculus.
//!
//! Every differential operator is a Fourier multiplier, so the discrete
//! integration-by-parts identities (gradient/divergence adjointness,
//! self-adjointness of Laplacian powers) hold to rounding error rather than
//! to truncation error.

mod field;
mod spacetime;
pub(crate) mod spectral;

use std::f64::consts::PI;

pub use field::{PeriodicField, VectorField};
pub use rustfft::num_complex::Complex64;
pub use spacetime::SpaceTimeField;

use crate::error::{Error, Result};

/// Uniform grid with `n` points per axis on the unit torus.
///
/// Samples are stored row-major: in two dimensions node `(i, j)` lives at
/// `i * n + j` and has coordinates `(i / n, j / n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::config(format!("unsupported dimension {dim}, expected 1 or 2")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "axis resolution {n} must be a power of two and at least 8"
            )));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight `1/n^d`; exact in binary floating point since `n` is
    /// a power of two.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Axis indices of a flat node index (second entry is 0 in 1-D).
    pub fn axes(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    /// Flat index of axis indices, wrapping each one modulo `n`.
    pub fn flat(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        let wi = i.rem_euclid(n) as usize;
        match self.dim {
            1 => wi,
            _ => wi * self.n + j.rem_euclid(n) as usize,
        }
    }

    /// Coordinates of a node in `[0, 1)^d` (second entry is 0 in 1-D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axes(idx);
        [i as f64 * self.spacing(), j as f64 * self.spacing()]
    }

    /// Signed frequency on one axis for a transform index, folded to
    /// `(-n/2, n/2]`.
    pub fn frequency(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Integer wave vector of a transform index.
    pub fn wavevector(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.axes(idx);
        match self.dim {
            1 => [self.frequency(i), 0],
            _ => [self.frequency(i), self.frequency(j)],
        }
    }

    /// `4π²|ξ|²`, the negated symbol of the Laplacian.
    pub fn laplacian_eigenvalue(&self, idx: usize) -> f64 {
        let [k0, k1] = self.wavevector(idx);
        4.0 * PI * PI * ((k0 * k0 + k1 * k1) as f64)
    }

    /// Largest `4π²|ξ|²` on the grid.
    pub fn max_laplacian_eigenvalue(&self) -> f64 {
        let half = (self.n / 2) as f64;
        4.0 * PI * PI * half * half * self.dim as f64
    }

    /// Symbol of `∂/∂x_axis`; zero on the Nyquist line where a real field has
    /// no well-defined derivative.
    pub fn derivative_symbol(&self, idx: usize, axis: usize) -> Complex64 {
        let k = self.wavevector(idx)[axis];
        if k.unsigned_abs() as usize * 2 == self.n {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 2.0 * PI * k as f64)
        }
    }

    /// Transform index of `-ξ`.
    pub(crate) fn mirror_index(&self, idx: usize) -> usize {
        let [i, j] = self.axes(idx);
        let n = self.n;
        let mi = (n - i) % n;
        match self.dim {
            1 => mi,
            _ => mi * n + (n - j) % n,
        }
    }
}

/// Applies a scalar Fourier multiplier to a coefficient vector in place.
pub(crate) fn apply_symbol(spectrum: &mut [Complex64], symbol: impl Fn(usize) -> Complex64) {
    for (idx, c) in spectrum.iter_mut().enumerate() {
        *c *= symbol(idx);
    }
}

/// Applies `(-4π²|ξ|²)^power` to a coefficient vector in place.
pub(crate) fn apply_laplacian_power(grid: Grid, spectrum: &mut [Complex64], power: u32) {
    for (idx, c) in spectrum.iter_mut().enumerate() {
        *c *= (-grid.laplacian_eigenvalue(idx)).powi(power as i32);
    }
}

/// Guards `(4π²|ξ|²_max)^power` against overflow.
pub(crate) fn check_laplacian_power(grid: Grid, power: u32) -> Result<()> {
    let log_max = power as f64 * grid.max_laplacian_eigenvalue().ln();
    if !(log_max < f64::MAX.ln()) {
        return Err(Error::Resolution(format!(
            "Laplacian power {power} overflows on a {}-point grid (symbol ~ e^{log_max:.1})",
            grid.n()
        )));
    }
    Ok(())
}
