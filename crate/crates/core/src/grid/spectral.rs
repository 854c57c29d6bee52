//! FFT plumbing for the unit torus.
//!
//! Coefficients are normalized so that `c[ξ] = n^{-d} Σ_j f(x_j) e^{-2πi ξ·x_j}`;
//! with this convention the grid quadrature satisfies Parseval exactly,
//! `∫ f g dx = Σ_ξ conj(f̂_ξ) ĝ_ξ`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::Grid;

type PlanKey = (usize, bool);

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, direction == FftDirection::Forward);
    let mut guard = plans.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    guard
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(n, direction))
        .clone()
}

fn transform_in_place(grid: Grid, data: &mut [Complex64], direction: FftDirection) {
    let n = grid.n();
    let fft = plan(n, direction);
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // rows are contiguous along axis 1
            for row in data.chunks_exact_mut(n) {
                fft.process(row);
            }
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = data[i * n + j];
                }
                fft.process(&mut column);
                for i in 0..n {
                    data[i * n + j] = column[i];
                }
            }
        }
    }
}

/// Normalized forward transform of real samples.
///
/// Coefficients below the transform's own rounding level,
/// `ε log2(N) max|f|`, are set to zero: the samples cannot resolve them, and
/// left in place they are amplified by high-order multipliers. A sampled
/// trigonometric polynomial therefore comes back with an exactly
/// band-limited spectrum.
pub(crate) fn forward_real(grid: Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_in_place(grid, &mut data);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = f64::EPSILON * (grid.len() as f64).log2() * peak;
    for c in data.iter_mut() {
        if c.norm() <= floor {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    data
}

/// Normalized forward transform of complex samples.
pub(crate) fn forward_in_place(grid: Grid, data: &mut [Complex64]) {
    transform_in_place(grid, data, FftDirection::Forward);
    let scale = grid.weight();
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Inverse transform (synthesis), no normalization.
pub(crate) fn inverse_in_place(grid: Grid, data: &mut [Complex64]) {
    transform_in_place(grid, data, FftDirection::Inverse);
}

/// Synthesis followed by taking the real part.
pub(crate) fn inverse_real(grid: Grid, spectrum: &[Complex64]) -> Vec<f64> {
    let mut data = spectrum.to_vec();
    inverse_in_place(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// Projects a coefficient vector onto the Hermitian-symmetric subspace, i.e.
/// onto spectra of real fields.
pub(crate) fn hermitian_part(grid: Grid, spectrum: &mut [Complex64]) {
    let len = spectrum.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mirror = grid.mirror_index(idx);
        *slot = 0.5 * (spectrum[idx] + spectrum[mirror].conj());
    }
    spectrum.copy_from_slice(&out);
}
