//! Cell-integrated kernel tables on the lattice `h Z^3` and their application by
//! zero-padded FFT convolution.

use crate::green::{green_combo_unchecked, Momentum};
use crate::spinor::{DiracCombo, Spinor, C64, I, ZERO};
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Cells within this Chebyshev distance of the singular cell are subdivided.
pub const NEAR_DEPTH: i64 = 2;
/// Subdivisions per axis for near cells.
pub const SUBDIVISION: usize = 4;

/// How the singular and near-singular cells were integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssemblyInfo {
    pub self_cell: &'static str,
    pub near_depth: i64,
    pub subdivision: usize,
}

impl Default for AssemblyInfo {
    fn default() -> Self {
        AssemblyInfo {
            self_cell: "equal-volume-sphere",
            near_depth: NEAR_DEPTH,
            subdivision: SUBDIVISION,
        }
    }
}

/// `int_0^a r (i r)^j e^{ikr} dr` by its power series in `k`.
fn sphere_moment(a: f64, k: C64, j: u32) -> C64 {
    let mut sum = ZERO;
    let ika = I * k * a;
    // term_n = (ika)^n / n!
    let mut term = C64::new(1.0, 0.0);
    for n in 0..400u32 {
        let add = term / (j + n + 2) as f64;
        sum += add;
        if n > 4 && add.norm() < 1e-18 * sum.norm() {
            break;
        }
        term = term * ika / (n + 1) as f64;
    }
    I.powu(j) * sum * a.powi(j as i32 + 2)
}

fn binom(m: usize, j: usize) -> f64 {
    const T: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    T[m][j]
}

/// k-derivative of order `m` of the kernel integrated over the self cell, with the
/// cube replaced by the ball of equal volume. The alpha terms integrate to zero.
pub fn self_cell(k: Momentum, h: f64, m: usize) -> DiracCombo {
    let a = h * (3.0 / (4.0 * PI)).cbrt();
    let kv = k.value();
    let mut s = ZERO;
    for j in 0..=m {
        s += binom(m, j) * k.energy_derivative(j) * sphere_moment(a, kv, (m - j) as u32);
    }
    DiracCombo {
        s: -s,
        t: -sphere_moment(a, kv, m as u32),
        v: [ZERO; 3],
    }
}

/// Cell integral of the order-`m` kernel around lattice displacement `d`.
pub fn cell_weight(k: Momentum, h: f64, m: usize, d: [i64; 3]) -> DiracCombo {
    if d == [0, 0, 0] {
        return self_cell(k, h, m);
    }
    let cheb = d.iter().map(|x| x.abs()).max().unwrap_or(0);
    if cheb <= NEAR_DEPTH {
        let sub = SUBDIVISION;
        let hs = h / sub as f64;
        let w = hs * hs * hs;
        let mut acc = DiracCombo::ZERO;
        for a in 0..sub {
            for b in 0..sub {
                for c in 0..sub {
                    let off = |i: usize| (i as f64 + 0.5) * hs - 0.5 * h;
                    let x = [
                        d[0] as f64 * h + off(a),
                        d[1] as f64 * h + off(b),
                        d[2] as f64 * h + off(c),
                    ];
                    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    acc = acc.add(&green_combo_unchecked(k, x, r, m));
                }
            }
        }
        acc.scale(C64::new(w, 0.0))
    } else {
        let x = [d[0] as f64 * h, d[1] as f64 * h, d[2] as f64 * h];
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        green_combo_unchecked(k, x, r, m).scale(C64::new(h * h * h, 0.0))
    }
}

/// Table of cell weights `W(d)` for `d` in `[-D, D]^3`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub momentum: Momentum,
    pub spacing: f64,
    pub order: usize,
    pub half_range: i64,
    pub weights: Vec<DiracCombo>,
}

impl KernelTable {
    pub fn new(k: Momentum, h: f64, order: usize, half_range: i64) -> Self {
        let side = (2 * half_range + 1) as usize;
        let mut weights = Vec::with_capacity(side * side * side);
        for a in -half_range..=half_range {
            for b in -half_range..=half_range {
                for c in -half_range..=half_range {
                    weights.push(cell_weight(k, h, order, [a, b, c]));
                }
            }
        }
        KernelTable {
            momentum: k,
            spacing: h,
            order,
            half_range,
            weights,
        }
    }

    pub fn get(&self, d: [i64; 3]) -> DiracCombo {
        let side = 2 * self.half_range + 1;
        let [a, b, c] = d.map(|x| x + self.half_range);
        self.weights[((a * side + b) * side + c) as usize]
    }

    /// Table of the adjoint convolution, `W'(d) = W(-d)^dagger`.
    pub fn adjoint(&self) -> KernelTable {
        let mut out = self.clone();
        let n = self.weights.len();
        for (i, w) in out.weights.iter_mut().enumerate() {
            *w = self.weights[n - 1 - i].adjoint();
        }
        out
    }
}

/// Smallest `p >= n` of the form `2^a 3^b 5^c`.
pub fn fft_size(n: usize) -> usize {
    let mut p = n.max(1);
    loop {
        let mut q = p;
        for f in [2, 3, 5] {
            while q % f == 0 {
                q /= f;
            }
        }
        if q == 1 {
            return p;
        }
        p += 1;
    }
}

/// Plans and scratch for cubic 3D FFTs of side `p`.
struct Fft3 {
    p: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(p: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            p,
            fwd: planner.plan_fft_forward(p),
            inv: planner.plan_fft_inverse(p),
        }
    }

    /// In-place transform. `live` bounds the nonzero input box along each axis so
    /// that all-zero lines can be skipped on the way in.
    fn run(&self, data: &mut [C64], inverse: bool, live: Option<usize>) {
        let p = self.p;
        let fft = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        let mut line = vec![ZERO; p];
        let lim = live.unwrap_or(p);
        // z lines: contiguous
        for x in 0..lim {
            for y in 0..lim {
                let off = (x * p + y) * p;
                fft.process_with_scratch(&mut data[off..off + p], &mut scratch);
            }
        }
        // y lines
        for x in 0..lim {
            for z in 0..p {
                for y in 0..p {
                    line[y] = data[(x * p + y) * p + z];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for y in 0..p {
                    data[(x * p + y) * p + z] = line[y];
                }
            }
        }
        // x lines
        for y in 0..p {
            for z in 0..p {
                for x in 0..p {
                    line[x] = data[(x * p + y) * p + z];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for x in 0..p {
                    data[(x * p + y) * p + z] = line[x];
                }
            }
        }
    }
}

/// Discrete convolution `out[i] = sum_j W(x_i - y_j) f[j]` between two centred
/// cubic grids of the same spacing.
pub struct LatticeConvolution {
    pub n_src: usize,
    pub n_dst: usize,
    p: usize,
    fft: Fft3,
    /// Fourier transforms of the five kernel components `s, t, v1, v2, v3`.
    khat: [Vec<C64>; 5],
}

impl LatticeConvolution {
    pub fn new(k: Momentum, h: f64, order: usize, n_src: usize, n_dst: usize) -> Self {
        let d = ((n_src - 1) / 2 + (n_dst - 1) / 2) as i64;
        let table = KernelTable::new(k, h, order, d);
        Self::from_table(&table, n_src, n_dst)
    }

    pub fn from_table(table: &KernelTable, n_src: usize, n_dst: usize) -> Self {
        let p = fft_size(n_src + n_dst - 1);
        let (cs, ct) = (((n_src - 1) / 2) as i64, ((n_dst - 1) / 2) as i64);
        assert!(
            table.half_range >= cs + ct,
            "kernel table too small for the convolution"
        );
        let fft = Fft3::new(p);
        let mut khat: [Vec<C64>; 5] = std::array::from_fn(|_| vec![ZERO; p * p * p]);
        let pi = p as i64;
        // K[q] = W[q - ct + cs] for q in [-(n_src - 1), n_dst - 1], stored modulo p
        let lo = -(n_src as i64 - 1);
        let hi = n_dst as i64 - 1;
        let wrap = |q: i64| (((q % pi) + pi) % pi) as usize;
        for qa in lo..=hi {
            for qb in lo..=hi {
                for qc in lo..=hi {
                    let w = table.get([qa - ct + cs, qb - ct + cs, qc - ct + cs]);
                    let idx = (wrap(qa) * p + wrap(qb)) * p + wrap(qc);
                    khat[0][idx] = w.s;
                    khat[1][idx] = w.t;
                    khat[2][idx] = w.v[0];
                    khat[3][idx] = w.v[1];
                    khat[4][idx] = w.v[2];
                }
            }
        }
        let scale = 1.0 / (p * p * p) as f64;
        for comp in khat.iter_mut() {
            fft.run(comp, false, None);
            for z in comp.iter_mut() {
                *z *= scale;
            }
        }
        LatticeConvolution {
            n_src,
            n_dst,
            p,
            fft,
            khat,
        }
    }

    pub fn fft_side(&self) -> usize {
        self.p
    }

    /// Apply to source values laid out on the `n_src^3` grid.
    pub fn apply(&self, src: &[Spinor]) -> Vec<Spinor> {
        let (p, ns, nd) = (self.p, self.n_src, self.n_dst);
        assert_eq!(src.len(), ns * ns * ns);
        let mut comps: [Vec<C64>; 4] = std::array::from_fn(|_| vec![ZERO; p * p * p]);
        for x in 0..ns {
            for y in 0..ns {
                for z in 0..ns {
                    let v = src[(x * ns + y) * ns + z];
                    let idx = (x * p + y) * p + z;
                    for c in 0..4 {
                        comps[c][idx] = v.0[c];
                    }
                }
            }
        }
        for c in comps.iter_mut() {
            self.fft.run(c, false, Some(ns));
        }
        let [ks, kt, k1, k2, k3] = &self.khat;
        for i in 0..p * p * p {
            let combo = DiracCombo {
                s: ks[i],
                t: kt[i],
                v: [k1[i], k2[i], k3[i]],
            };
            let out = combo.apply(&Spinor([comps[0][i], comps[1][i], comps[2][i], comps[3][i]]));
            for c in 0..4 {
                comps[c][i] = out.0[c];
            }
        }
        for c in comps.iter_mut() {
            self.fft.run(c, true, None);
        }
        let mut out = vec![Spinor::ZERO; nd * nd * nd];
        for x in 0..nd {
            for y in 0..nd {
                for z in 0..nd {
                    let idx = (x * p + y) * p + z;
                    out[(x * nd + y) * nd + z] = Spinor([comps[0][idx], comps[1][idx], comps[2][idx], comps[3][idx]]);
                }
            }
        }
        out
    }
}
