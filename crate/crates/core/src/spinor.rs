//! Four-spinors, 4x4 complex matrices and the Dirac matrices.
//!
//! Pauli matrices follow the labelling sigma_1 = diag(1, -1), sigma_2 = [[0, 1], [1, 0]],
//! sigma_3 = [[0, -i], [i, 0]]. The alpha matrices are block off-diagonal copies of
//! the Pauli matrices and beta = diag(1, 1, -1, -1).

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// A single four-component spinor value.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Spinor(pub [C64; 4]);

impl Spinor {
    pub const ZERO: Spinor = Spinor([ZERO; 4]);

    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Spinor([a, b, c, d])
    }

    /// Unit spinor along component `i`.
    pub fn basis(i: usize) -> Self {
        let mut s = Spinor::ZERO;
        s.0[i] = ONE;
        s
    }

    /// Hermitian product `self^dagger other`.
    pub fn dot(&self, other: &Spinor) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> Spinor {
        Spinor(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, c: C64) -> Spinor {
        Spinor(self.0.map(|z| z * c))
    }

    /// `beta * self`.
    pub fn beta(&self) -> Spinor {
        let s = self.0;
        Spinor([s[0], s[1], -s[2], -s[3]])
    }

    /// `alpha_l * self` for `l` in 0..3.
    pub fn alpha(&self, l: usize) -> Spinor {
        let [a, b, c, d] = self.0;
        // upper = sigma_l (c, d), lower = sigma_l (a, b)
        let (u, w) = match l {
            0 => ((c, -d), (a, -b)),
            1 => ((d, c), (b, a)),
            2 => ((-I * d, I * c), (-I * b, I * a)),
            _ => panic!("alpha index out of range: {l}"),
        };
        Spinor([u.0, u.1, w.0, w.1])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for Spinor {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Spinor {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, o: Spinor) -> Spinor {
        Spinor([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, o: Spinor) -> Spinor {
        Spinor([
            self.0[0] - o.0[0],
            self.0[1] - o.0[1],
            self.0[2] - o.0[2],
            self.0[3] - o.0[3],
        ])
    }
}

impl AddAssign for Spinor {
    fn add_assign(&mut self, o: Spinor) {
        for i in 0..4 {
            self.0[i] += o.0[i];
        }
    }
}

impl SubAssign for Spinor {
    fn sub_assign(&mut self, o: Spinor) {
        for i in 0..4 {
            self.0[i] -= o.0[i];
        }
    }
}

impl Neg for Spinor {
    type Output = Spinor;
    fn neg(self) -> Spinor {
        Spinor(self.0.map(|z| -z))
    }
}

impl Mul<C64> for Spinor {
    type Output = Spinor;
    fn mul(self, c: C64) -> Spinor {
        self.scale(c)
    }
}

impl Mul<f64> for Spinor {
    type Output = Spinor;
    fn mul(self, c: f64) -> Spinor {
        Spinor(self.0.map(|z| z * c))
    }
}

/// Dense 4x4 complex matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix4C(pub [[C64; 4]; 4]);

impl Default for Matrix4C {
    fn default() -> Self {
        Matrix4C::zeros()
    }
}

impl Matrix4C {
    pub fn zeros() -> Self {
        Matrix4C([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * c)
    }

    pub fn mul_spinor(&self, s: &Spinor) -> Spinor {
        let mut out = Spinor::ZERO;
        for i in 0..4 {
            out.0[i] = self.0[i][0] * s.0[0] + self.0[i][1] * s.0[1] + self.0[i][2] * s.0[2] + self.0[i][3] * s.0[3];
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|r| r.iter()).fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl Add for Matrix4C {
    type Output = Matrix4C;
    fn add(self, o: Matrix4C) -> Matrix4C {
        Matrix4C::from_fn(|i, j| self.0[i][j] + o.0[i][j])
    }
}

impl Sub for Matrix4C {
    type Output = Matrix4C;
    fn sub(self, o: Matrix4C) -> Matrix4C {
        Matrix4C::from_fn(|i, j| self.0[i][j] - o.0[i][j])
    }
}

impl Mul for Matrix4C {
    type Output = Matrix4C;
    fn mul(self, o: Matrix4C) -> Matrix4C {
        Matrix4C::from_fn(|i, j| (0..4).map(|k| self.0[i][k] * o.0[k][j]).sum())
    }
}

impl Mul<C64> for Matrix4C {
    type Output = Matrix4C;
    fn mul(self, c: C64) -> Matrix4C {
        self.scale(c)
    }
}

/// Pauli matrix `l` (0-based) in the labelling used throughout the crate.
pub fn sigma(l: usize) -> [[C64; 2]; 2] {
    match l {
        0 => [[ONE, ZERO], [ZERO, -ONE]],
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        _ => panic!("sigma index out of range: {l}"),
    }
}

/// `alpha_l = [[0, sigma_l], [sigma_l, 0]]`.
pub fn alpha(l: usize) -> Matrix4C {
    let s = sigma(l);
    let mut m = Matrix4C::zeros();
    for i in 0..2 {
        for j in 0..2 {
            m.0[i][j + 2] = s[i][j];
            m.0[i + 2][j] = s[i][j];
        }
    }
    m
}

pub fn beta() -> Matrix4C {
    let mut m = Matrix4C::identity();
    m.0[2][2] = -ONE;
    m.0[3][3] = -ONE;
    m
}

/// The symbol `alpha . k + beta` of the free Dirac operator.
pub fn free_dirac_symbol(k: [f64; 3]) -> Matrix4C {
    let mut m = beta();
    for (l, kl) in k.iter().enumerate() {
        m = m + alpha(l).scale(C64::new(*kl, 0.0));
    }
    m
}

/// A matrix of the form `s I + t beta + sum_l v_l alpha_l`.
///
/// Every Green kernel value and every potential value lives in this span, so the
/// integral operators are stored and applied in this five-scalar form.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiracCombo {
    pub s: C64,
    pub t: C64,
    pub v: [C64; 3],
}

impl DiracCombo {
    pub const ZERO: DiracCombo = DiracCombo {
        s: ZERO,
        t: ZERO,
        v: [ZERO; 3],
    };

    pub fn apply(&self, x: &Spinor) -> Spinor {
        let [a, b, c, d] = x.0;
        let [v1, v2, v3] = self.v;
        // sigma . v acting on a two-spinor (p, q)
        let sv = |p: C64, q: C64| (v1 * p + (v2 - I * v3) * q, (v2 + I * v3) * p - v1 * q);
        let (u0, u1) = sv(c, d);
        let (l0, l1) = sv(a, b);
        Spinor([
            (self.s + self.t) * a + u0,
            (self.s + self.t) * b + u1,
            (self.s - self.t) * c + l0,
            (self.s - self.t) * d + l1,
        ])
    }

    /// `self^dagger x`.
    pub fn apply_adjoint(&self, x: &Spinor) -> Spinor {
        self.adjoint().apply(x)
    }

    pub fn adjoint(&self) -> DiracCombo {
        DiracCombo {
            s: self.s.conj(),
            t: self.t.conj(),
            v: self.v.map(|z| z.conj()),
        }
    }

    pub fn to_matrix(&self) -> Matrix4C {
        let mut m = Matrix4C::identity().scale(self.s) + beta().scale(self.t);
        for l in 0..3 {
            m = m + alpha(l).scale(self.v[l]);
        }
        m
    }

    pub fn scale(&self, c: C64) -> DiracCombo {
        DiracCombo {
            s: self.s * c,
            t: self.t * c,
            v: self.v.map(|z| z * c),
        }
    }

    pub fn add(&self, o: &DiracCombo) -> DiracCombo {
        DiracCombo {
            s: self.s + o.s,
            t: self.t + o.t,
            v: [self.v[0] + o.v[0], self.v[1] + o.v[1], self.v[2] + o.v[2]],
        }
    }

    pub fn max_abs(&self) -> f64 {
        [self.s, self.t, self.v[0], self.v[1], self.v[2]]
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Positive-energy eigenvector of `alpha . k + beta` for spin label `j` in {0, 1}.
///
/// The closed form `N (xi, (sigma . k) xi / (E + 1))` with `xi = e_j` is smooth in
/// `k`, and its first nonzero component is real and positive.
pub fn positive_energy_spinor(k: [f64; 3], j: usize) -> Spinor {
    assert!(j < 2, "spin label must be 0 or 1");
    let k2: f64 = k.iter().map(|x| x * x).sum();
    let e = (k2 + 1.0).sqrt();
    let n = ((e + 1.0) / (2.0 * e)).sqrt();
    let mut xi = Spinor::ZERO;
    xi.0[j] = ONE;
    // alpha . k applied to (xi, 0) puts sigma . k xi in the lower block
    let mut low = Spinor::ZERO;
    for (l, kl) in k.iter().enumerate() {
        low += xi.alpha(l) * *kl;
    }
    let mut out = Spinor::ZERO;
    out.0[j] = C64::new(n, 0.0);
    out.0[2] = low.0[2] * (n / (e + 1.0));
    out.0[3] = low.0[3] * (n / (e + 1.0));
    out
}
