use super::{bump, spatial_kernel_symbol, MollifierParams};
use crate::error::{Error, Result};
use crate::grid::{Complex64, PeriodicField, SpaceTimeField};

/// Samples `values[i]` at `start + i * dt` on the real time axis; zero outside
/// the record.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub start: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::parameter(format!("time step must be positive, got {dt}")));
        }
        Ok(TimeSeries { start, dt, values })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dt
    }

    /// `∫ f g dt` by the rectangle rule on the shared time grid.
    pub fn inner(&self, other: &TimeSeries) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeDirection {
    /// `ψ_ρ`, supported in `(0, ρ)`: averages the past.
    Forward,
    /// `φ_ρ`, supported in `(-ρ, 0)`: averages the future.
    Backward,
}

/// Discrete one-sided kernel on a time grid.
///
/// `weights[j]` is `ψ_ρ((j + 1) dt)`, normalized so `Σ weights · dt = 1`;
/// the backward kernel is the time reversal `φ_ρ(-t) = ψ_ρ(t)`, sample by
/// sample.
#[derive(Clone, Debug, PartialEq)]
pub struct OneSidedKernel {
    pub dt: f64,
    pub weights: Vec<f64>,
}

impl OneSidedKernel {
    pub fn new(rho: f64, dt: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::parameter(format!("time width rho must be positive, got {rho}")));
        }
        let half = rho / 2.0;
        let mut weights = Vec::new();
        let mut j = 1usize;
        while (j as f64) * dt < rho {
            // ψ_ρ(t) = ζ_{ρ/2}(t - ρ/2)
            let t = j as f64 * dt;
            weights.push(bump((t - half) / half));
            j += 1;
        }
        let mass: f64 = weights.iter().sum::<f64>() * dt;
        if !(mass > 0.0) {
            return Err(Error::parameter(format!(
                "time width rho = {rho} is not resolved by dt = {dt}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= mass);
        Ok(OneSidedKernel { dt, weights })
    }

    /// Kernel value at lag `offset * dt` (positive offsets for `ψ_ρ`).
    pub fn forward_at(&self, offset: isize) -> f64 {
        if offset >= 1 {
            self.weights.get(offset as usize - 1).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// `φ_ρ` at lag `offset * dt`.
    pub fn backward_at(&self, offset: isize) -> f64 {
        self.forward_at(-offset)
    }

    fn apply(&self, values: &[f64], direction: TimeDirection) -> Vec<f64> {
        let len = values.len() as isize;
        (0..len)
            .map(|i| {
                let mut acc = 0.0;
                for (j, w) in self.weights.iter().enumerate() {
                    let lag = j as isize + 1;
                    let src = match direction {
                        TimeDirection::Forward => i - lag,
                        TimeDirection::Backward => i + lag,
                    };
                    if (0..len).contains(&src) {
                        acc += w * values[src as usize];
                    }
                }
                acc * self.dt
            })
            .collect()
    }
}

/// Convolution in time with `ψ_ρ` or `φ_ρ`, once or twice.
///
/// The record is treated as zero outside its span, so callers should pad by
/// at least `2ρ` on the side the kernel reaches into.
pub fn one_sided_time_mollify(f: &TimeSeries, rho: f64, direction: TimeDirection, passes: u32) -> Result<TimeSeries> {
    if passes != 1 && passes != 2 {
        return Err(Error::parameter(format!("passes must be 1 or 2, got {passes}")));
    }
    let kernel = OneSidedKernel::new(rho, f.dt)?;
    let mut values = kernel.apply(&f.values, direction);
    if passes == 2 {
        values = kernel.apply(&values, direction);
    }
    Ok(TimeSeries { start: f.start, dt: f.dt, values })
}

/// A space-time field extended by zero outside `[0, T]`.
#[derive(Clone, Debug)]
pub struct ZeroExtension<'a> {
    field: &'a SpaceTimeField,
}

impl ZeroExtension<'_> {
    pub fn horizon(&self) -> f64 {
        self.field.horizon()
    }

    /// Value at one node and time; linear in time between levels, zero
    /// outside `[0, T]`.
    pub fn sample(&self, node: usize, t: f64) -> f64 {
        let horizon = self.field.horizon();
        if !(0.0..=horizon).contains(&t) {
            return 0.0;
        }
        let pos = t / self.field.dt();
        let lo = (pos.floor() as usize).min(self.field.steps());
        let frac = pos - lo as f64;
        let a = self.field.slice(lo).values()[node];
        if frac == 0.0 || lo == self.field.steps() {
            return a;
        }
        let b = self.field.slice(lo + 1).values()[node];
        a + frac * (b - a)
    }

    /// Time series of one node, padded with `pad` zero levels on each side.
    pub fn series(&self, node: usize, pad: usize) -> TimeSeries {
        let mut values = vec![0.0; pad];
        values.extend(self.field.node_series(node));
        values.extend(std::iter::repeat_n(0.0, pad));
        let dt = self.field.dt();
        TimeSeries { start: -(pad as f64) * dt, dt, values }
    }

    /// Padding (in levels) that keeps a width-`rho` kernel applied twice
    /// from wrapping past the record.
    pub fn padding_for(&self, rho: f64) -> usize {
        (2.0 * rho / self.field.dt()).ceil() as usize + 1
    }
}

/// Extends `f`, defined on `[0, T]`, by zero to the whole time axis.
pub fn zero_extend_time(f: &SpaceTimeField) -> ZeroExtension<'_> {
    ZeroExtension { field: f }
}

/// Smooth pair matching the initial density and terminal value exactly.
///
/// `eta` is extended by `m0` before `t = 0`, shifted forward by `h`, and
/// `v` is extended by `uT` after `T`, shifted backward by `h`. The
/// differences to the boundary data are mollified with a space-time kernel of
/// width `lambda` (a spatial bump times a time bump) and the boundary data
/// added back. Since the time kernel never reaches past `lambda < h/2`, the
/// mollified differences vanish on the boundary slices.
pub fn boundary_compatible_approx(
    eta: &SpaceTimeField,
    v: &SpaceTimeField,
    m0: &PeriodicField,
    u_terminal: &PeriodicField,
    params: &MollifierParams,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    eta.check_shape(v)?;
    eta.slice(0).check_grid(m0)?;
    m0.check_grid(u_terminal)?;
    if !(params.lambda > 0.0 && params.h > 0.0 && params.lambda < params.h / 2.0) {
        return Err(Error::parameter(format!(
            "need 0 < lambda < h/2, got lambda = {}, h = {}",
            params.lambda, params.h
        )));
    }
    if !(params.h < eta.horizon() / 2.0) {
        return Err(Error::parameter(format!(
            "time shift h = {} must be below T/2 = {}",
            params.h,
            eta.horizon() / 2.0
        )));
    }
    let eta_min = eta.min();
    if !(eta_min > 0.0) {
        return Err(Error::domain(format!("eta must be positive, min = {eta_min}")));
    }
    m0.ensure_positive("initial density m0")?;
    let c_bar = eta_min.min(m0.min());

    let grid = m0.grid();
    let dt = eta.dt();
    let steps = eta.steps();
    let horizon = eta.horizon();
    let symbol = spatial_kernel_symbol(grid, params.lambda)?;

    // symmetric time kernel ζ_λ sampled at lags |j| dt < λ
    let mut lags = vec![(0isize, bump(0.0))];
    let mut j = 1isize;
    while (j as f64) * dt < params.lambda {
        let w = bump(j as f64 * dt / params.lambda);
        lags.push((j, w));
        lags.push((-j, w));
        j += 1;
    }
    let mass: f64 = lags.iter().map(|(_, w)| w).sum();
    for (_, w) in lags.iter_mut() {
        *w /= mass;
    }

    let interp = |f: &SpaceTimeField, tau: f64| -> PeriodicField {
        let pos = (tau / dt).clamp(0.0, steps as f64);
        let lo = (pos.floor() as usize).min(steps);
        let frac = pos - lo as f64;
        if frac == 0.0 || lo == steps {
            f.slice(lo).clone()
        } else {
            f.slice(lo).lincomb(1.0 - frac, f.slice(lo + 1), frac)
        }
    };
    // difference to the boundary datum of the shifted extension at time s
    let eta_diff = |s: f64| -> Option<PeriodicField> {
        let tau = s - params.h;
        (tau >= 0.0).then(|| interp(eta, tau).sub(m0))
    };
    let v_diff = |s: f64| -> Option<PeriodicField> {
        let tau = s + params.h;
        (tau <= horizon).then(|| interp(v, tau).sub(u_terminal))
    };

    let mollify_at = |t: f64, diff: &dyn Fn(f64) -> Option<PeriodicField>, base: &PeriodicField| -> PeriodicField {
        let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut any = false;
        for &(lag, w) in &lags {
            if let Some(d) = diff(t - lag as f64 * dt) {
                any = true;
                for (a, c) in acc.iter_mut().zip(d.spectrum()) {
                    *a += w * c;
                }
            }
        }
        if !any {
            return base.clone();
        }
        for (a, s) in acc.iter_mut().zip(&symbol) {
            *a *= s;
        }
        let smoothed = PeriodicField::from_spectrum(grid, acc);
        base.add(&smoothed)
    };

    let mut eta_out = Vec::with_capacity(steps + 1);
    let mut v_out = Vec::with_capacity(steps + 1);
    for level in 0..=steps {
        let t = level as f64 * dt;
        eta_out.push(mollify_at(t, &eta_diff, m0));
        v_out.push(mollify_at(t, &v_diff, u_terminal));
    }
    let eta_out = SpaceTimeField::new(horizon, eta_out)?;
    let v_out = SpaceTimeField::new(horizon, v_out)?;
    let floor = eta_out.min();
    if !(floor >= c_bar / 2.0) {
        return Err(Error::domain(format!(
            "approximation min {floor} fell below c/2 = {}; decrease lambda",
            c_bar / 2.0
        )));
    }
    Ok((eta_out, v_out))
}
