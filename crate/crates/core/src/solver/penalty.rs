use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Profile used to blend `-s^{-q}` into zero on `(σ/2, σ]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    /// `S(t) = f(t)/(f(t)+f(1-t))` with `f(t) = e^{-1/t}`.
    #[default]
    BumpSmoothStep,
}

/// σ, the Laplacian power `k` of the `Δ^{2k}` terms, and the penalty
/// exponent `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub sigma: f64,
    pub k: u32,
    pub q: f64,
    #[serde(default)]
    pub blend: Blend,
}

impl RegularizationParams {
    /// Smallest admissible `k` and `q = d + 1`.
    pub fn defaults(dim: usize, sigma: f64) -> Self {
        RegularizationParams { sigma, k: min_k(dim), q: dim as f64 + 1.0, blend: Blend::default() }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        RegularizationParams { sigma, ..self }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::parameter(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if self.k < min_k(dim) {
            return Err(Error::parameter(format!(
                "k = {} too small in dimension {dim}: need 2k - 4 > d/2 + 1, i.e. k >= {}",
                self.k,
                min_k(dim)
            )));
        }
        if !(self.q > dim as f64 && self.q.is_finite()) {
            return Err(Error::parameter(format!("q must exceed d = {dim}, got {}", self.q)));
        }
        Ok(())
    }
}

/// Least `k` with `2k - 4 > d/2 + 1`.
pub fn min_k(dim: usize) -> u32 {
    let mut k = 1;
    while (2 * k) as f64 - 4.0 <= dim as f64 / 2.0 + 1.0 {
        k += 1;
    }
    k
}

fn ramp(t: f64) -> f64 {
    if t > 0.0 { (-1.0 / t).exp() } else { 0.0 }
}

fn ramp_prime(t: f64) -> f64 {
    if t > 0.0 { (-1.0 / t).exp() / (t * t) } else { 0.0 }
}

/// Smooth step with `S = 0` on `t ≤ 0`, `S = 1` on `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    let (a, b) = (ramp(t), ramp(1.0 - t));
    a / (a + b)
}

pub fn smooth_step_prime(t: f64) -> f64 {
    let (a, b) = (ramp(t), ramp(1.0 - t));
    let (da, db) = (ramp_prime(t), ramp_prime(1.0 - t));
    (da * b + a * db) / ((a + b) * (a + b))
}

fn check_positive(s: f64) -> Result<()> {
    if s > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("penalty argument must be positive, got {s}")))
    }
}

/// The penalty `β_σ(s)`: `-s^{-q}` up to `σ/2`, zero beyond `σ`.
pub fn beta_sigma(s: f64, params: &RegularizationParams) -> Result<f64> {
    check_positive(s)?;
    let sigma = params.sigma;
    Ok(if s > sigma {
        0.0
    } else if s <= sigma / 2.0 {
        -s.powf(-params.q)
    } else {
        -s.powf(-params.q) * smooth_step((sigma - s) / (sigma / 2.0))
    })
}

pub fn beta_sigma_prime(s: f64, params: &RegularizationParams) -> Result<f64> {
    check_positive(s)?;
    let (sigma, q) = (params.sigma, params.q);
    Ok(if s > sigma {
        0.0
    } else if s <= sigma / 2.0 {
        q * s.powf(-q - 1.0)
    } else {
        let t = (sigma - s) / (sigma / 2.0);
        q * s.powf(-q - 1.0) * smooth_step(t) + s.powf(-q) * smooth_step_prime(t) * 2.0 / sigma
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64, q: f64) -> RegularizationParams {
        RegularizationParams { sigma, k: 3, q, blend: Blend::BumpSmoothStep }
    }

    #[test]
    fn reference_values() {
        assert_eq!(beta_sigma(0.5, &params(0.4, 3.0)).unwrap(), 0.0);
        assert!((beta_sigma(0.1, &params(0.4, 2.0)).unwrap() + 100.0).abs() < 1e-12);
        assert!((beta_sigma(0.2, &params(0.4, 2.0)).unwrap() + 25.0).abs() < 1e-12);
    }

    #[test]
    fn blend_is_continuous_at_both_ends() {
        let p = params(0.4, 2.0);
        for eps in [1e-3, 1e-4, 1e-6] {
            let right = beta_sigma(0.2 + eps, &p).unwrap();
            assert!((right + 25.0).abs() < 1e3 * eps, "{eps}: {right}");
            let left = beta_sigma(0.4 - eps, &p).unwrap();
            assert!(left.abs() < 1e3 * eps);
        }
    }

    #[test]
    fn derivative_matches_differences_and_is_nonnegative() {
        let p = params(0.4, 2.0);
        let h = 1e-7;
        for i in 1..400 {
            let s = 0.15 + 0.3 * i as f64 / 400.0;
            let d = beta_sigma_prime(s, &p).unwrap();
            assert!(d >= 0.0);
            let fd = (beta_sigma(s + h, &p).unwrap() - beta_sigma(s - h, &p).unwrap()) / (2.0 * h);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0), "s = {s}: {fd} vs {d}");
        }
    }

    #[test]
    fn nonpositive_argument() {
        assert!(matches!(beta_sigma(0.0, &params(0.1, 2.0)), Err(Error::Domain(_))));
        assert!(beta_sigma_prime(-1.0, &params(0.1, 2.0)).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert_eq!(min_k(1), 3);
        assert_eq!(min_k(2), 4);
        assert!(RegularizationParams::defaults(1, 0.1).validate(1).is_ok());
        assert!(RegularizationParams::defaults(2, 0.1).validate(2).is_ok());
        assert!(params(0.1, 2.0).validate(2).is_err());
        assert!(params(1.0, 2.0).validate(1).is_err());
        assert!(params(0.1, 1.0).validate(1).is_err());
    }
}
