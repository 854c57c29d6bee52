use super::{Grid, PeriodicField};
use crate::error::{Error, Result};

/// Samples on `(torus grid) × (uniform time grid over [0, T])`.
///
/// Time level `i` sits at `t_i = i T / steps`, `i = 0..=steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    horizon: f64,
    slices: Vec<PeriodicField>,
}

impl SpaceTimeField {
    pub fn new(horizon: f64, slices: Vec<PeriodicField>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("time horizon must be positive, got {horizon}")));
        }
        if slices.len() < 2 {
            return Err(Error::config("space-time field needs at least two time levels"));
        }
        let grid = slices[0].grid();
        for s in &slices {
            slices[0].check_grid(s)?;
        }
        Ok(SpaceTimeField { grid, horizon, slices })
    }

    /// Samples `f(x, t)` on `steps + 1` time levels.
    pub fn from_fn(grid: Grid, steps: usize, horizon: f64, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("time grid needs at least one step"));
        }
        let dt = horizon / steps as f64;
        let slices = (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                PeriodicField::from_fn(grid, |x| f(x, t))
            })
            .collect();
        Self::new(horizon, slices)
    }

    /// Repeats a spatial field on every time level.
    pub fn constant_in_time(field: &PeriodicField, steps: usize, horizon: f64) -> Result<Self> {
        Self::new(horizon, vec![field.clone(); steps + 1])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time intervals.
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt()
    }

    pub fn slice(&self, level: usize) -> &PeriodicField {
        &self.slices[level]
    }

    pub fn slices(&self) -> &[PeriodicField] {
        &self.slices
    }

    /// Time series of one spatial node.
    pub fn node_series(&self, node: usize) -> Vec<f64> {
        self.slices.iter().map(|s| s.values()[node]).collect()
    }

    /// Rebuilds a field from per-node time series (`series[node][level]`).
    pub fn from_node_series(grid: Grid, horizon: f64, series: &[Vec<f64>]) -> Result<Self> {
        if series.len() != grid.len() {
            return Err(Error::config("one time series per node required"));
        }
        let levels = series[0].len();
        let slices = (0..levels)
            .map(|t| PeriodicField::new(grid, series.iter().map(|s| s[t]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(horizon, slices)
    }

    pub(crate) fn check_shape(&self, other: &SpaceTimeField) -> Result<()> {
        if self.grid != other.grid || self.slices.len() != other.slices.len() || self.horizon != other.horizon {
            return Err(Error::config("space-time fields live on different space or time grids"));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().map(PeriodicField::min).fold(f64::INFINITY, f64::min)
    }

    pub fn map_slices(&self, f: impl Fn(&PeriodicField) -> PeriodicField) -> SpaceTimeField {
        SpaceTimeField { grid: self.grid, horizon: self.horizon, slices: self.slices.iter().map(f).collect() }
    }

    /// `∫_0^T ∫ f g dx dt`, trapezoid rule in time.
    pub fn inner(&self, other: &SpaceTimeField) -> f64 {
        let last = self.steps();
        let dt = self.dt();
        self.slices
            .iter()
            .zip(&other.slices)
            .enumerate()
            .map(|(i, (a, b))| {
                let w = if i == 0 || i == last { 0.5 * dt } else { dt };
                w * a.inner(b)
            })
            .sum()
    }

    /// Second-order time derivative: centered in the interior, one-sided
    /// three-point stencils at both ends.
    pub fn time_derivative(&self) -> SpaceTimeField {
        let steps = self.steps();
        let dt = self.dt();
        let s = &self.slices;
        let mut out = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let d = if steps == 1 {
                s[1].lincomb(1.0 / dt, &s[0], -1.0 / dt)
            } else if i == 0 {
                s[0].lincomb(-1.5 / dt, &s[1], 2.0 / dt).lincomb(1.0, &s[2], -0.5 / dt)
            } else if i == steps {
                s[i].lincomb(1.5 / dt, &s[i - 1], -2.0 / dt).lincomb(1.0, &s[i - 2], 0.5 / dt)
            } else {
                s[i + 1].lincomb(0.5 / dt, &s[i - 1], -0.5 / dt)
            };
            out.push(d);
        }
        SpaceTimeField { grid: self.grid, horizon: self.horizon, slices: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_derivative_exact_on_quadratics() {
        let g = Grid::new(1, 8).unwrap();
        let f = SpaceTimeField::from_fn(g, 10, 2.0, |x, t| x[0] + t * t - 3.0 * t).unwrap();
        let d = f.time_derivative();
        for lvl in 0..=10 {
            let t = f.time(lvl);
            for v in d.slice(lvl).values() {
                assert!((v - (2.0 * t - 3.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trapezoid_pairing_of_ones() {
        let g = Grid::new(1, 8).unwrap();
        let one = SpaceTimeField::from_fn(g, 4, 3.0, |_, _| 1.0).unwrap();
        assert!((one.inner(&one) - 3.0).abs() < 1e-15);
    }
}
