//! The outgoing Green kernel of the free Dirac operator at `E_k = sqrt(k^2 + 1)`
//! and its first three derivatives in `k`.
//!
//! `G(x) = (1/4 pi) e^{ikr} ( -(E_k + k alpha.x/r + beta)/r - i alpha.x/r^3 )`,
//! the kernel of `(E_k - D0)^{-1}` with `D0 = -i alpha.grad + beta`.

use crate::error::{Error, Result};
use crate::grid::norm3;
use crate::spinor::{DiracCombo, Matrix4C, C64, I, ONE, ZERO};
use std::f64::consts::PI;

/// Momentum `k` with `Im k >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Momentum {
    k: C64,
}

impl Momentum {
    pub fn new(k: C64) -> Result<Self> {
        if k.im < 0.0 || !k.re.is_finite() || !k.im.is_finite() {
            return Err(Error::InvalidMomentum(format!("{k}")));
        }
        Ok(Momentum { k })
    }

    pub fn real(k: f64) -> Self {
        Momentum { k: C64::new(k, 0.0) }
    }

    /// `k = i kappa`, the bound-state side below the threshold.
    pub fn imaginary(kappa: f64) -> Result<Self> {
        Momentum::new(C64::new(0.0, kappa))
    }

    pub fn value(&self) -> C64 {
        self.k
    }

    pub fn energy(&self) -> C64 {
        energy(*self)
    }

    /// `d^m E_k / dk^m` for `m` in 0..=3.
    pub fn energy_derivative(&self, m: usize) -> C64 {
        let e = self.energy();
        let k = self.k;
        match m {
            0 => e,
            1 => k / e,
            2 => ONE / (e * e * e),
            3 => -3.0 * k / e.powi(5),
            _ => panic!("energy derivative order {m} not supported"),
        }
    }
}

/// Principal branch of `sqrt(k^2 + 1)`.
pub fn energy(k: Momentum) -> C64 {
    (k.k * k.k + ONE).sqrt()
}

/// Value of the kernel or one of its k-derivatives at a displacement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEval {
    pub value: Matrix4C,
}

/// `G(x)` as a 4x4 matrix.
pub fn green(k: Momentum, x: [f64; 3]) -> Result<KernelEval> {
    Ok(KernelEval {
        value: green_combo(k, x, 0)?.to_matrix(),
    })
}

/// `d^order G(x) / dk^order` for order 1, 2 or 3.
pub fn green_dk(k: Momentum, x: [f64; 3], order: usize) -> Result<KernelEval> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!("derivative order {order} not in 1..=3")));
    }
    Ok(KernelEval {
        value: green_combo(k, x, order)?.to_matrix(),
    })
}

/// Kernel derivative of order 0..=3 in `s I + t beta + v.alpha` form.
pub fn green_combo(k: Momentum, x: [f64; 3], order: usize) -> Result<DiracCombo> {
    let r = norm3(x);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(green_combo_unchecked(k, x, r, order))
}

#[inline]
pub(crate) fn green_combo_unchecked(k: Momentum, x: [f64; 3], r: f64, order: usize) -> DiracCombo {
    let kk = k.k;
    let e = k.energy();
    let phase = (I * kk * r).exp() / (4.0 * PI);
    let (s, t, radial) = match order {
        0 => (-e / r, C64::new(-1.0 / r, 0.0), -(kk / r + I / (r * r))),
        1 => (-I * e - kk / (e * r), -I, -I * kk),
        2 => {
            let e3 = e * e * e;
            (r * e - 2.0 * I * kk / e - ONE / (r * e3), C64::new(r, 0.0), r * kk - I)
        }
        3 => {
            let e3 = e * e * e;
            let e5 = e3 * e * e;
            (
                I * r * r * e + 3.0 * r * kk / e - 3.0 * I / e3 + 3.0 * kk / (r * e5),
                I * r * r,
                I * r * r * kk + 2.0 * r,
            )
        }
        _ => panic!("kernel derivative order {order} not supported"),
    };
    let c = phase * radial / r;
    DiracCombo {
        s: phase * s,
        t: phase * t,
        v: [c * x[0], c * x[1], c * x[2]],
    }
}

/// Relative deviation of `green_dk(order)` from a Richardson-extrapolated central
/// difference of `green_dk(order - 1)` with step `step`.
pub fn kernel_fd_error(k: Momentum, x: [f64; 3], order: usize, step: f64) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!("derivative order {order} not in 1..=3")));
    }
    let at = |dk: f64| -> Result<Matrix4C> { Ok(green_combo(Momentum::new(k.k + dk)?, x, order - 1)?.to_matrix()) };
    let central = |h: f64| -> Result<Matrix4C> {
        let d = at(h)? - at(-h)?;
        Ok(d.scale(C64::new(0.5 / h, 0.0)))
    };
    let coarse = central(step)?;
    let fine = central(0.5 * step)?;
    let fd = (fine.scale(C64::new(4.0, 0.0)) - coarse).scale(C64::new(1.0 / 3.0, 0.0));
    let exact = green_combo(k, x, order)?.to_matrix();
    Ok((exact - fd).max_abs() / exact.max_abs())
}

impl Default for Momentum {
    fn default() -> Self {
        Momentum { k: ZERO }
    }
}
