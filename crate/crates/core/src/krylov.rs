//! Restarted GMRES and small vector helpers for complex systems.

use crate::spinor::{C64, ZERO};

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(x: &mut [C64], a: C64) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresSettings {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        GmresSettings {
            tol: 1e-12,
            restart: 80,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresResult {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solve `A x = b` with restarted GMRES (modified Gram-Schmidt, Givens rotations).
pub fn gmres(op: impl Fn(&[C64]) -> Vec<C64>, b: &[C64], x0: Option<&[C64]>, s: GmresSettings) -> GmresResult {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![ZERO; n]);
    if bnorm == 0.0 {
        return GmresResult {
            x: vec![ZERO; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let m = s.restart.max(1);
    let mut total = 0usize;
    loop {
        let ax = op(&x);
        let mut r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= s.tol * bnorm || total >= s.max_iter {
            return GmresResult {
                x,
                iterations: total,
                relative_residual: beta / bnorm,
                converged: beta <= s.tol * bnorm,
            };
        }
        scale(&mut r, C64::new(1.0 / beta, 0.0));
        let mut v: Vec<Vec<C64>> = vec![r];
        let mut hess = vec![vec![ZERO; m]; m + 1];
        let (mut cs, mut sn) = (vec![ZERO; m], vec![ZERO; m]);
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut j_used = 0;
        for j in 0..m {
            let mut w = op(&v[j]);
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(vi, &w);
                hess[i][j] = hij;
                axpy(&mut w, -hij, vi);
            }
            // one reorthogonalisation pass keeps the basis orthogonal near breakdown
            for (i, vi) in v.iter().enumerate() {
                let c = dot(vi, &w);
                hess[i][j] += c;
                axpy(&mut w, -c, vi);
            }
            let wn = norm2(&w);
            hess[j + 1][j] = C64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * hess[i][j] + sn[i].conj() * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let (a, bb) = (hess[j][j], hess[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = ZERO;
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            hess[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            hess[j + 1][j] = ZERO;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            total += 1;
            j_used = j + 1;
            let converged = g[j + 1].norm() <= s.tol * bnorm;
            if converged || wn == 0.0 || total >= s.max_iter {
                break;
            }
            scale(&mut w, C64::new(1.0 / wn, 0.0));
            v.push(w);
        }
        // back substitution
        let mut y = vec![ZERO; j_used];
        for i in (0..j_used).rev() {
            let mut acc = g[i];
            for k in i + 1..j_used {
                acc -= hess[i][k] * y[k];
            }
            y[i] = if hess[i][i].norm() == 0.0 {
                ZERO
            } else {
                acc / hess[i][i]
            };
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut x, *yi, &v[i]);
        }
    }
}

/// Ritz values of `op` from `m` Arnoldi steps started at `v0`.
pub fn arnoldi_ritz(op: impl Fn(&[C64]) -> Vec<C64>, v0: &[C64], m: usize) -> Vec<C64> {
    let n0 = norm2(v0);
    if n0 == 0.0 || m == 0 {
        return Vec::new();
    }
    let mut v: Vec<Vec<C64>> = vec![v0.iter().map(|z| z / n0).collect()];
    let mut h = nalgebra::DMatrix::<C64>::zeros(m + 1, m);
    let mut steps = 0;
    for j in 0..m {
        let mut w = op(&v[j]);
        for _ in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let c = dot(vi, &w);
                h[(i, j)] += c;
                axpy(&mut w, -c, vi);
            }
        }
        steps = j + 1;
        let wn = norm2(&w);
        h[(j + 1, j)] = C64::new(wn, 0.0);
        if wn <= 1e-14 * n0 {
            break;
        }
        scale(&mut w, C64::new(1.0 / wn, 0.0));
        v.push(w);
    }
    let hk = h.view((0, 0), (steps, steps)).into_owned();
    let (_, t) = hk.schur().unpack();
    t.diagonal().iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let n = 30;
        let a: Vec<Vec<C64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = if i == j { 3.0 } else { 0.0 };
                        C64::new(
                            d + 0.1 * ((i * 7 + j * 3) % 5) as f64 / n as f64,
                            0.05 * ((i + 2 * j) % 3) as f64,
                        )
                    })
                    .collect()
            })
            .collect();
        let op = |x: &[C64]| -> Vec<C64> {
            a.iter()
                .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
                .collect()
        };
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let res = gmres(
            op,
            &b,
            None,
            GmresSettings {
                tol: 1e-13,
                restart: 7,
                max_iter: 500,
            },
        );
        assert!(res.converged);
        let r: Vec<C64> = op(&res.x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) < 1e-12);
    }

    #[test]
    fn ritz_values_of_diagonal_operator() {
        let d: Vec<f64> = (0..40).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let op = |x: &[C64]| -> Vec<C64> { x.iter().zip(&d).map(|(a, b)| a * b).collect() };
        let v0 = vec![C64::new(1.0, 0.0); 40];
        let ritz = arnoldi_ritz(op, &v0, 40);
        assert!(ritz.iter().any(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-10));
        assert!(ritz.iter().any(|z| (z - C64::new(1.0 / 40.0, 0.0)).norm() < 1e-8));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let res = gmres(|x: &[C64]| x.to_vec(), &[ZERO; 4], None, GmresSettings::default());
        assert!(res.converged && res.x.iter().all(|z| *z == ZERO));
    }
}
