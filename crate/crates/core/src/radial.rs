//! Radial reference solutions for a sharp spherical well `V(r) = V0` for `r < R`.
//!
//! With `psi = (g(r) Omega_{kappa m}, i f(r) Omega_{-kappa m})` the radial Dirac system is
//!
//! ```text
//! g' = -(1 + kappa)/r g + (E + 1 - V) f
//! f' =  (kappa - 1)/r f - (E - 1 - V) g
//! ```
//!
//! Inside the well the regular solution is a spherical Bessel function of order
//! `l = |kappa + 1/2| - 1/2`. At `E = 1` the bounded exterior solution is
//! `f = c r^(kappa-1)`, `g = 2c r^kappa / (2 kappa + 1)` for `kappa < 0`, and
//! `f = 0`, `g = r^(-1-kappa)` for `kappa > 0`. Below the threshold the exterior
//! solutions are modified spherical Bessel functions of the second kind.

use crate::error::{Error, Result};
use ode_solvers::dop_shared::OutputType;
use ode_solvers::{Dopri5, System, Vector2};
use roots::{find_root_brent, SimpleConvergency};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialWell {
    /// Signed potential energy inside the well.
    pub depth: f64,
    pub radius: f64,
    /// Dirac angular quantum number, nonzero.
    pub kappa: i32,
}

impl RadialWell {
    pub fn new(depth: f64, radius: f64, kappa: i32) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "well radius must be positive, got {radius}"
            )));
        }
        if kappa == 0 {
            return Err(Error::InvalidInput("kappa must be nonzero".into()));
        }
        Ok(RadialWell { depth, radius, kappa })
    }

    pub fn with_depth(&self, depth: f64) -> Self {
        RadialWell { depth, ..*self }
    }

    /// Orbital angular momentum of the upper component.
    pub fn l_upper(&self) -> u32 {
        if self.kappa < 0 {
            (-self.kappa - 1) as u32
        } else {
            self.kappa as u32
        }
    }
}

fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// `j_l(p r) / p^l` for `p^2 = p2`, continued to `i_l(q r) / q^l` when `p2 = -q^2 < 0`.
///
/// Entire in `p2`, equal to `r^l / (2l+1)!!` at `p2 = 0`.
pub fn reduced_bessel(l: u32, p2: f64, r: f64) -> f64 {
    let z2 = p2 * r * r;
    if z2.abs() < 4.0 {
        let mut term = r.powi(l as i32) / double_factorial(2 * l as i64 + 1);
        let mut sum = term;
        for n in 1..60 {
            term *= -0.5 * z2 / (n as f64 * (2 * l + 2 * n + 1) as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    let lf = l as i32;
    if p2 > 0.0 {
        let p = p2.sqrt();
        let z = p * r;
        let j0 = z.sin() / z;
        if l == 0 {
            return j0;
        }
        let mut jm = j0;
        let mut j = z.sin() / (z * z) - z.cos() / z;
        for k in 1..l {
            let next = (2 * k + 1) as f64 / z * j - jm;
            jm = j;
            j = next;
        }
        j / p.powi(lf)
    } else {
        let q = (-p2).sqrt();
        let z = q * r;
        let i0 = z.sinh() / z;
        if l == 0 {
            return i0;
        }
        let mut im = i0;
        let mut i = z.cosh() / z - z.sinh() / (z * z);
        for k in 1..l {
            let next = im - (2 * k + 1) as f64 / z * i;
            im = i;
            i = next;
        }
        i / q.powi(lf)
    }
}

/// Modified spherical Bessel function of the second kind, `k_l(z)` up to the
/// factor `pi/2`: `k_0 = e^{-z}/z`, `k_1 = e^{-z}(1 + z)/z^2`.
pub fn bessel_k(l: u32, z: f64) -> f64 {
    let k0 = (-z).exp() / z;
    if l == 0 {
        return k0;
    }
    let mut km = k0;
    let mut k = (-z).exp() * (1.0 + z) / (z * z);
    for n in 1..l {
        let next = km + (2 * n + 1) as f64 / z * k;
        km = k;
        k = next;
    }
    k
}

/// Regular interior solution `(g, f)` at radius `r` for energy `e`, normalised
/// like the small-`r` series used by the shooting integrator.
pub fn interior_solution(well: &RadialWell, e: f64, r: f64) -> (f64, f64) {
    let v = well.depth;
    let p2 = (e - v) * (e - v) - 1.0;
    let l = well.l_upper();
    if well.kappa < 0 {
        (reduced_bessel(l, p2, r), -(e - 1.0 - v) * reduced_bessel(l + 1, p2, r))
    } else {
        ((e + 1.0 - v) * reduced_bessel(l, p2, r), reduced_bessel(l - 1, p2, r))
    }
}

/// Bounded exterior direction `(g, f)` at `r`, for `0 < e <= 1`.
pub fn exterior_solution(well: &RadialWell, e: f64, r: f64) -> (f64, f64) {
    let l = well.l_upper();
    let kf = well.kappa as f64;
    if e >= 1.0 {
        return if well.kappa < 0 {
            (2.0 * r / (2.0 * kf + 1.0), 1.0)
        } else {
            (1.0, 0.0)
        };
    }
    let q = (1.0 - e * e).sqrt();
    let z = q * r;
    let g = bessel_k(l, z);
    let f = if well.kappa < 0 {
        -q * bessel_k(l + 1, z)
    } else {
        -q * bessel_k(l - 1, z)
    } / (e + 1.0);
    (g, f)
}

/// Sine of the angle between two vectors in the `(g, f)` plane.
fn mismatch(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 * b.1 - a.1 * b.0) / ((a.0 * a.0 + a.1 * a.1).sqrt() * (b.0 * b.0 + b.1 * b.1).sqrt())
}

/// Threshold matching residual from the analytic interior solution.
pub fn threshold_residual(well: &RadialWell) -> f64 {
    mismatch(
        interior_solution(well, 1.0, well.radius),
        exterior_solution(well, 1.0, well.radius),
    )
}

struct RadialOde {
    kappa: f64,
    e: f64,
    v: f64,
}

impl System<f64, Vector2<f64>> for RadialOde {
    fn system(&self, r: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = -(1.0 + self.kappa) / r * y[0] + (self.e + 1.0 - self.v) * y[1];
        dy[1] = (self.kappa - 1.0) / r * y[1] - (self.e - 1.0 - self.v) * y[0];
    }
}

/// Integrate the regular solution from the origin to the well edge with an
/// adaptive Dormand-Prince 5(4) scheme at relative tolerance `1e-10`.
pub fn shoot_interior(well: &RadialWell, e: f64) -> Result<(f64, f64)> {
    let v = well.depth;
    let l = well.l_upper() as i32;
    let r0 = 1e-6 * well.radius;
    // two-term series start, normalised as in `interior_solution`
    let y0 = if well.kappa < 0 {
        let g = r0.powi(l) / double_factorial(2 * l as i64 + 1);
        let f = -(e - 1.0 - v) * r0.powi(l + 1) / double_factorial(2 * l as i64 + 3);
        Vector2::new(g, f)
    } else {
        let f = r0.powi(l - 1) / double_factorial(2 * l as i64 - 1);
        let g = (e + 1.0 - v) * r0.powi(l) / double_factorial(2 * l as i64 + 1);
        Vector2::new(g, f)
    };
    let sys = RadialOde {
        kappa: well.kappa as f64,
        e,
        v,
    };
    let span = well.radius - r0;
    let mut stepper = Dopri5::from_param(
        sys,
        r0,
        well.radius,
        span,
        y0,
        1e-10,
        1e-14,
        0.9,
        0.04,
        0.2,
        10.0,
        0.02 * well.radius,
        0.01 * r0,
        1_000_000,
        1000,
        OutputType::Sparse,
    );
    stepper
        .integrate()
        .map_err(|e| Error::NoConvergence(format!("radial integration failed: {e:?}")))?;
    let y = stepper
        .y_out()
        .last()
        .ok_or_else(|| Error::NoConvergence("radial integration produced no output".into()))?;
    Ok((y[0], y[1]))
}

/// Threshold matching residual from the shooting integrator.
pub fn threshold_residual_shooting(well: &RadialWell) -> Result<f64> {
    let inner = shoot_interior(well, 1.0)?;
    Ok(mismatch(inner, exterior_solution(well, 1.0, well.radius)))
}

/// Critical depth found by the analytic matching condition, cross-checked by shooting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdRoot {
    pub depth: f64,
    pub depth_shooting: f64,
    pub residual_at_zero: f64,
}

fn brent(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut conv = SimpleConvergency {
        eps: 1e-15,
        max_iter: 200,
    };
    find_root_brent(lo, hi, f, &mut conv).map_err(|e| Error::NoConvergence(format!("root search: {e}")))
}

/// All sign changes of `f` over `samples` equal steps of `[lo, hi]`, refined by Brent.
fn bracketed_roots(lo: f64, hi: f64, samples: usize, f: &dyn Fn(f64) -> f64) -> Result<Vec<f64>> {
    let mut roots = Vec::new();
    let step = (hi - lo) / samples as f64;
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=samples {
        let b = lo + step * i as f64;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(brent(a, b, f)?);
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

/// Critical depth of the well in `[lo, hi]` nearest to zero.
///
/// The analytic residual is scanned for sign changes, and the selected root is
/// located again with the shooting residual.
pub fn threshold_condition(well: &RadialWell, lo: f64, hi: f64) -> Result<ThresholdRoot> {
    let res = |v0: f64| threshold_residual(&well.with_depth(v0));
    let mut roots = bracketed_roots(lo, hi, 400, &res)?;
    roots.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap_or(std::cmp::Ordering::Equal));
    let depth = *roots.first().ok_or(Error::NoCriticalCoupling { lo, hi })?;
    let width = 1e-3 * depth.abs().max(1e-3);
    let shoot = |v0: f64| threshold_residual_shooting(&well.with_depth(v0)).unwrap_or(f64::NAN);
    let depth_shooting = brent(depth - width, depth + width, shoot)?;
    Ok(ThresholdRoot {
        depth,
        depth_shooting,
        residual_at_zero: res(0.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundState {
    pub energy: f64,
    /// `sqrt(1 - E^2)`.
    pub kappa: f64,
}

/// The bound state of the well closest to the threshold `E = 1`, by shooting.
pub fn bound_energy(well: &RadialWell) -> Result<BoundState> {
    let res = |q: f64| -> f64 {
        let e = (1.0 - q * q).sqrt();
        match shoot_interior(well, e) {
            Ok(inner) => mismatch(inner, exterior_solution(well, e, well.radius)),
            Err(_) => f64::NAN,
        }
    };
    // log-spaced scan of the decay rate q from the threshold downwards
    let n = 240;
    let (qlo, qhi) = (1e-6f64, 0.999f64);
    let ratio = (qhi / qlo).powf(1.0 / n as f64);
    let mut a = qlo;
    let mut fa = res(a);
    for _ in 0..n {
        let b = a * ratio;
        let fb = res(b);
        if fa * fb < 0.0 {
            let q = brent(a, b, res)?;
            let e = (1.0 - q * q).sqrt();
            return Ok(BoundState { energy: e, kappa: q });
        }
        a = b;
        fa = fb;
    }
    Err(Error::InvalidInput(format!("no bound state for depth {}", well.depth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reduced_bessel_branches_agree_at_switch() {
        for l in 0..4 {
            for p2 in [3.9, 4.1, -3.9, -4.1] {
                let s = reduced_bessel(l, p2, 1.0);
                let s2 = reduced_bessel(l, p2 * 1.0001, 1.0);
                assert!((s - s2).abs() < 1e-3 * s.abs().max(1e-3), "l={l} p2={p2}");
            }
        }
        assert!((reduced_bessel(0, PI * PI, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn free_case_is_not_critical() {
        let w = RadialWell::new(0.0, 1.0, -1).unwrap();
        assert!(threshold_residual(&w).abs() > 0.1);
    }

    #[test]
    fn p_half_roots_are_closed_form() {
        // kappa = +1: j_0(p R) = 0 with p^2 = V0 (V0 - 2)
        let w = RadialWell::new(0.0, 1.0, 1).unwrap();
        let rep = threshold_condition(&w, 2.5, 6.0).unwrap();
        let exact = 1.0 + (1.0 + PI * PI).sqrt();
        assert!((rep.depth - exact).abs() < 1e-10);
        let att = threshold_condition(&w, -4.0, -0.5).unwrap();
        assert!((att.depth + (1.0 + PI * PI).sqrt() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shooting_agrees_with_matching() {
        for (kappa, lo, hi) in [(-1, -3.0, -0.2), (1, 2.5, 6.0), (-2, -4.0, -2.0), (2, -5.0, -3.0)] {
            let w = RadialWell::new(0.0, 1.0, kappa).unwrap();
            let r = threshold_condition(&w, lo, hi).unwrap();
            assert!(
                (r.depth - r.depth_shooting).abs() <= 1e-8 * r.depth.abs(),
                "kappa {kappa}: {r:?}"
            );
        }
    }

    #[test]
    fn bound_state_appears_below_threshold() {
        let w = RadialWell::new(0.0, 1.0, 1).unwrap();
        let v_star = 1.0 + (1.0 + PI * PI).sqrt();
        let b = bound_energy(&w.with_depth(v_star - 0.05)).unwrap();
        assert!(b.energy < 1.0 && b.energy > 0.0);
        assert!(bound_energy(&w.with_depth(v_star + 0.05))
            .map(|b| b.kappa > 0.5)
            .unwrap_or(true));
    }
}
