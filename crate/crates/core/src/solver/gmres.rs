use crate::grid::Complex64;

type C = Complex64;

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GmresOptions {
    pub rtol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct GmresOutcome {
    pub x: Vec<C>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES for `A M⁻¹ y = b`, `x = M⁻¹ y`, starting from zero.
///
/// The returned residual is the one GMRES tracks through its Givens
/// rotations, relative to `‖b‖`.
pub(crate) fn gmres(
    apply: &mut dyn FnMut(&[C]) -> Vec<C>,
    precondition: &dyn Fn(&[C]) -> Vec<C>,
    b: &[C],
    opts: GmresOptions,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![C::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, relative_residual: 0.0 };
    }
    let mut total = 0;
    let mut rel = 1.0;
    while total < opts.max_iter {
        let ax = if total == 0 { vec![C::new(0.0, 0.0); n] } else { apply(&precondition(&x)) };
        // x is in preconditioned coordinates until the final M⁻¹
        let r: Vec<C> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.rtol {
            break;
        }
        let m = opts.restart.min(opts.max_iter - total);
        let mut basis: Vec<Vec<C>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![C::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C::new(0.0, 0.0); m];
        let mut sn = vec![C::new(0.0, 0.0); m];
        let mut g = vec![C::new(0.0, 0.0); m + 1];
        g[0] = C::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            let mut w = apply(&precondition(&basis[j]));
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(q, &w);
                h[i][j] = hij;
                for (wk, qk) in w.iter_mut().zip(q) {
                    *wk -= hij * qk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = C::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if r == 0.0 {
                used = j;
                break;
            }
            cs[j] = a / r;
            sn[j] = bb / r;
            h[j][j] = C::new(r, 0.0);
            h[j + 1][j] = C::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= opts.rtol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the leading `used` block
        let mut y = vec![C::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, qi) in x.iter_mut().zip(&basis[k]) {
                *xi += yk * qi;
            }
        }
        if rel <= opts.rtol || used == 0 {
            break;
        }
    }
    GmresOutcome { x: precondition(&x), iterations: total, relative_residual: rel }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Vec<C>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let base = if i == j { 4.0 + i as f64 } else { 0.0 };
                        C::new(base + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
                    })
                    .collect()
            })
            .collect();
        let b: Vec<C> = (0..n).map(|i| C::new(i as f64, 1.0)).collect();
        let mut apply = |x: &[C]| -> Vec<C> { a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect() };
        let diag: Vec<C> = (0..n).map(|i| a[i][i]).collect();
        let pre = |x: &[C]| -> Vec<C> { x.iter().zip(&diag).map(|(v, d)| v / d).collect() };
        let out = gmres(&mut apply, &pre, &b, GmresOptions { rtol: 1e-12, restart: 8, max_iter: 400 });
        let ax = apply(&out.x);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * norm(&b), "{err} after {}", out.iterations);
    }
}
