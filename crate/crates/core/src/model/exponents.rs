use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integrability exponents and the quantities derived from them.
///
/// `q[i]` is `None` when the defining reciprocal is not positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentProfile {
    pub r: f64,
    pub gamma: f64,
    pub r1: f64,
    pub gamma1: f64,
    pub d: u32,
    pub r_conj: f64,
    pub gamma_conj: f64,
    /// Sobolev exponent `dγ/(d−γ)`, only when `γ < d`.
    pub gamma_star: Option<f64>,
    pub q: [Option<f64>; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentFlags {
    /// `r1 ≥ r > 1` and `γ1 ≥ γ > 1`.
    pub ordering: bool,
    /// `2/r + 1/γ < 1` and `1/r + 2/γ < 1`.
    pub super_q: bool,
    /// `r′ ≤ γ*` when `γ < d`; vacuous otherwise.
    pub sobolev: bool,
}

impl ExponentFlags {
    pub fn all(&self) -> bool {
        self.ordering && self.super_q && self.sobolev
    }
}

fn conjugate(s: f64) -> f64 {
    s / (s - 1.0)
}

fn from_reciprocal(inv: f64) -> Option<f64> {
    (inv > 0.0).then(|| 1.0 / inv)
}

pub fn check_exponent_profile(r: f64, gamma: f64, r1: f64, gamma1: f64, d: u32) -> Result<(ExponentProfile, ExponentFlags)> {
    for (name, v) in [("r", r), ("gamma", gamma), ("r1", r1), ("gamma1", gamma1)] {
        if !(v > 1.0 && v.is_finite()) {
            return Err(Error::parameter(format!("exponent {name} must exceed 1, got {v}")));
        }
    }
    if d == 0 {
        return Err(Error::parameter("dimension must be positive"));
    }
    let dd = d as f64;
    let q = [
        from_reciprocal(1.0 - 1.0 / r - 1.0 / gamma),
        from_reciprocal(1.0 - 2.0 / r),
        from_reciprocal(1.0 - 2.0 / r - 1.0 / gamma),
        from_reciprocal(1.0 - 1.0 / r - 2.0 / gamma),
    ];
    let gamma_star = (gamma < dd).then(|| dd * gamma / (dd - gamma));
    let r_conj = conjugate(r);
    let profile = ExponentProfile {
        r,
        gamma,
        r1,
        gamma1,
        d,
        r_conj,
        gamma_conj: conjugate(gamma),
        gamma_star,
        q,
    };
    let flags = ExponentFlags {
        ordering: r1 >= r && gamma1 >= gamma,
        super_q: 2.0 / r + 1.0 / gamma < 1.0 && 1.0 / r + 2.0 / gamma < 1.0,
        // r′ ≤ γ* compared through reciprocals: 1 − 1/r ≥ 1/γ − 1/d
        sobolev: gamma_star.is_none() || 1.0 - 1.0 / r >= 1.0 / gamma - 1.0 / dd,
    };
    Ok((profile, flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_in_three_dimensions() {
        let (p, f) = check_exponent_profile(4.0, 4.0, 4.0, 4.0, 3).unwrap();
        let q: Vec<f64> = p.q.iter().map(|q| q.unwrap()).collect();
        for (got, want) in q.iter().zip([2.0, 2.0, 4.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(f.super_q && f.ordering && f.sobolev);
        assert!(p.gamma_star.is_none());
    }

    #[test]
    fn near_critical_quadratic_fails() {
        let (p, f) = check_exponent_profile(1.0 + 1e-9, 2.0, 2.0, 2.0, 2).unwrap();
        assert!(!f.super_q);
        assert!(p.q[2].is_none() && p.q[3].is_none());
    }

    #[test]
    fn sobolev_threshold() {
        let (p, f) = check_exponent_profile(4.0 / 3.0, 2.0, 2.0, 2.0, 4).unwrap();
        assert_eq!(p.gamma_star, Some(4.0));
        assert!((p.r_conj - 4.0).abs() < 1e-12);
        assert!(f.sobolev);
        let (_, f) = check_exponent_profile(1.3, 2.0, 2.0, 2.0, 4).unwrap();
        assert!(!f.sobolev);
        let (p, _) = check_exponent_profile(1.5, 2.0, 2.0, 2.0, 4).unwrap();
        let conj = p.r_conj;
        assert!((1.0 / p.r + 1.0 / conj - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ordering_and_domain() {
        let (_, f) = check_exponent_profile(4.0, 4.0, 3.0, 4.0, 3).unwrap();
        assert!(!f.ordering);
        assert!(matches!(check_exponent_profile(1.0, 2.0, 2.0, 2.0, 1), Err(Error::Parameter(_))));
    }
}
