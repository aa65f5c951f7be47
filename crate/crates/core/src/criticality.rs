//! Critical couplings, the threshold space `N = ker(1 - T^A_1)`, `lambda(Phi)`,
//! decay classification and the direct-sum projectors.

use crate::error::{Error, Result};
use crate::green::Momentum;
use crate::grid::{check_same, norm3, Grid3, SpinorField};
use crate::krylov::{arnoldi_ritz, dot, norm2, scale};
use crate::ls_solver::{
    assemble_t, shifted_system, smallest_singular, IntegralOperator, ShiftedSystem, SolverSettings,
};
use crate::potential::{pseudo_inner, FourPotential, SampledPotential};
use crate::spinor::{Spinor, C64, ZERO};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Relative offset of the coupling used for the threshold-space subspace iteration.
const SUBSPACE_SHIFT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalOptions {
    /// Arnoldi steps used to localise candidate couplings.
    pub krylov_dim: usize,
    pub golden_iters: usize,
    /// Half width of the golden-section bracket relative to the candidate.
    pub golden_width: f64,
    /// Largest threshold-space dimension resolved.
    pub max_dim: usize,
    /// Critical when `sigma_min < critical_tol * ||M||`.
    pub critical_tol: f64,
    /// `lambda` counts as zero below `lambda_tol * ||A||_1 * ||Phi||_inf`.
    pub lambda_tol: f64,
    pub solver: SolverSettings,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            krylov_dim: 80,
            golden_iters: 8,
            golden_width: 0.02,
            max_dim: 4,
            critical_tol: 1e-8,
            lambda_tol: 1e-6,
            solver: SolverSettings::default(),
        }
    }
}

/// A critical potential `g* A` together with its threshold space.
#[derive(Clone, Debug)]
pub struct CriticalStructure {
    pub coupling: f64,
    /// The shape at unit coupling.
    pub unit: SampledPotential,
    /// `g* A`.
    pub potential: SampledPotential,
    /// Basis of `N` on the potential grid, each with sup norm 1.
    pub basis: Vec<SpinorField>,
    pub lambda_values: Vec<Spinor>,
    /// `None` when the basis mixes vanishing and non-vanishing `lambda`.
    pub lambda_bar: Option<u8>,
    /// `(p, q)` entry `<Phi_p, A, A Phi_q>`, the conjugate of `<A Phi_q, A, Phi_p>`.
    pub gram_m: DMatrix<C64>,
    /// `(p, q)` entry `<Phi_p, A, Phi_q>`.
    pub gram_n: DMatrix<C64>,
    /// Smallest singular values of `1 - g* T` (ascending).
    pub singular_values: Vec<f64>,
    pub matrix_norm: f64,
    /// `||(1 - T^{g* A}_1) Phi||_inf` on the support, per basis element.
    pub residuals: Vec<f64>,
}

impl CriticalStructure {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn grid(&self) -> Grid3 {
        self.potential.grid
    }

    /// The basis extended by `Phi = T Phi` to an aligned grid.
    pub fn basis_on(&self, grid: Grid3) -> Result<Vec<SpinorField>> {
        if grid.same_as(&self.grid()) {
            return Ok(self.basis.clone());
        }
        let op = assemble_t(&self.potential, Momentum::default());
        self.basis.iter().map(|phi| op.apply_to(phi, grid)).collect()
    }

    pub fn projectors(&self) -> Result<Projectors> {
        Projectors::new(self, self.grid())
    }

    pub fn projectors_on(&self, grid: Grid3) -> Result<Projectors> {
        Projectors::new(self, grid)
    }
}

fn pair_support(op: &IntegralOperator, x: &[C64], y: &[C64]) -> C64 {
    let mut acc = ZERO;
    for (s, i) in op.support.iter().enumerate() {
        let xs = Spinor([x[4 * s], x[4 * s + 1], x[4 * s + 2], x[4 * s + 3]]);
        let ys = Spinor([y[4 * s], y[4 * s + 1], y[4 * s + 2], y[4 * s + 3]]);
        acc += xs.dot(&op.potential.apply_at(*i, &ys));
    }
    acc
}

/// `nu = <v, A, T v> / <v, A, v>`, falling back to the Euclidean quotient.
pub(crate) fn rayleigh_quotient(op: &IntegralOperator, v: &[C64]) -> C64 {
    let tv = op.apply_vec(v);
    let den = pair_support(op, v, v);
    if den.norm() > 1e-8 * norm2(v).powi(2) * op.potential.norms().linf {
        pair_support(op, v, &tv) / den
    } else {
        dot(v, &tv) / dot(v, v)
    }
}

/// `||1 - g T||_2` by power iteration on `M^dagger M`.
pub fn matrix_norm(sys: &dyn ShiftedSystem, iterations: usize) -> f64 {
    let mut v = crate::ls_solver::start_block(sys.dim(), 1).remove(0);
    let mut est = 0.0;
    for _ in 0..iterations {
        let n = norm2(&v);
        if n == 0.0 {
            break;
        }
        scale(&mut v, C64::new(1.0 / n, 0.0));
        let mv = sys.apply(&v);
        est = norm2(&mv);
        v = sys.apply_adjoint(&mv);
    }
    est
}

/// Smallest singular value of `1 - g T` from one warm-started inverse-iteration step.
pub fn sigma_min(op: &IntegralOperator, g: f64, settings: &SolverSettings, warm: Option<&[C64]>) -> (f64, Vec<C64>) {
    let sys = shifted_system(op, C64::new(g, 0.0), settings);
    let start = warm.map(|w| vec![w.to_vec()]);
    let est = smallest_singular(sys.as_ref(), 1, 1, start);
    (est.values[0], est.vectors[0].clone())
}

/// `sigma_min(1 - g T^A_1)` at each coupling, for coarse scans.
pub fn sigma_profile(unit: &SampledPotential, couplings: &[f64], settings: &SolverSettings) -> Vec<(f64, f64)> {
    let op = assemble_t(unit, Momentum::default());
    let mut warm: Option<Vec<C64>> = None;
    couplings
        .iter()
        .map(|&g| {
            let (s, v) = sigma_min(&op, g, settings, warm.as_deref());
            warm = Some(v);
            (g, s)
        })
        .collect()
}

fn normalize(x: &mut [C64]) {
    let n = norm2(x);
    if n > 0.0 {
        scale(x, C64::new(1.0 / n, 0.0));
    }
}

/// Remove the components along `found` in the `A` pairing (Euclidean when `<v, A, v>` vanishes).
fn deflate(op: &IntegralOperator, found: &[Vec<C64>], w: &mut [C64]) {
    for _ in 0..2 {
        for v in found {
            let vv = pair_support(op, v, v);
            let c = if vv.norm() > 1e-10 * norm2(v).powi(2) * op.potential.norms().linf {
                pair_support(op, v, w) / vv
            } else {
                dot(v, w) / dot(v, v)
            };
            crate::krylov::axpy(w, -c, v);
        }
    }
}

/// Fix the global phase so the largest component (first on ties) is real positive.
fn fix_phase(x: &mut [C64]) {
    let mut best = 0;
    let mut mag = 0.0;
    for (i, z) in x.iter().enumerate() {
        if z.norm() > mag * (1.0 + 1e-9) {
            mag = z.norm();
            best = i;
        }
    }
    if mag > 0.0 {
        let ph = x[best].conj() / mag;
        scale(x, ph);
    }
}

/// Locate a critical coupling of `shape` in `bracket` and extract the threshold space.
///
/// Candidates are the reciprocals of real Ritz values of `T^A_1`; the one nearest
/// zero is refined by golden section on `sigma_min(g)` and polished by Rayleigh
/// quotient iteration.
pub fn find_critical_coupling(
    shape: &FourPotential,
    grid: Grid3,
    bracket: (f64, f64),
    opts: &CriticalOptions,
) -> Result<CriticalStructure> {
    let unit = shape.sample(grid)?;
    find_critical_sampled(&unit, bracket, opts)
}

pub fn find_critical_sampled(
    unit: &SampledPotential,
    bracket: (f64, f64),
    opts: &CriticalOptions,
) -> Result<CriticalStructure> {
    let (lo, hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    let none = || Error::NoCriticalCoupling { lo, hi };
    if unit.is_zero() {
        return Err(none());
    }
    let op = assemble_t(unit, Momentum::default());
    let dim = op.n_unknowns();
    let v0 = crate::ls_solver::start_block(dim, 1).remove(0);
    let ritz = arnoldi_ritz(|x| op.apply_vec(x), &v0, opts.krylov_dim.min(dim));
    let mut candidates: Vec<f64> = ritz
        .iter()
        .filter(|nu| nu.norm() > 0.0 && nu.im.abs() <= 1e-3 * nu.norm())
        .map(|nu| 1.0 / nu.re)
        .filter(|g| *g >= lo && *g <= hi)
        .collect();
    candidates.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let g0 = *candidates.first().ok_or_else(none)?;

    // solves near the singular coupling stagnate, so cap them
    let mut capped = opts.solver;
    capped.gmres.max_iter = capped.gmres.max_iter.min(300);
    // golden section on sigma_min over a narrow bracket around the candidate
    let w = opts.golden_width * g0.abs();
    let (mut a, mut b) = ((g0 - w).max(lo), (g0 + w).min(hi));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut vc) = sigma_min(&op, c, &capped, None);
    let (mut fd, mut vd) = sigma_min(&op, d, &capped, Some(&vc));
    for _ in 0..opts.golden_iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            vd = vc.clone();
            c = b - phi * (b - a);
            let r = sigma_min(&op, c, &capped, Some(&vd));
            fc = r.0;
            vc = r.1;
        } else {
            a = c;
            c = d;
            fc = fd;
            vc = vd.clone();
            d = a + phi * (b - a);
            let r = sigma_min(&op, d, &capped, Some(&vc));
            fd = r.0;
            vd = r.1;
        }
    }
    let (mut g, mut v) = if fc < fd { (c, vc) } else { (d, vd) };

    // Rayleigh quotient iteration; the solves become singular as g converges
    for _ in 0..8 {
        let nu = rayleigh_quotient(&op, &v);
        if nu.re == 0.0 {
            break;
        }
        let g_new = 1.0 / nu.re;
        let done = (g_new - g).abs() <= 1e-14 * g.abs();
        g = g_new;
        if done {
            break;
        }
        let sys = shifted_system(&op, C64::new(g, 0.0), &capped);
        let res = sys.solve(&v, Some(&v));
        let n = norm2(&res.x);
        if !(n.is_finite() && n > 0.0) {
            break;
        }
        v = res.x.iter().map(|z| z / n).collect();
        if !res.converged {
            break;
        }
    }
    if g < lo || g > hi {
        return Err(none());
    }

    let sys = shifted_system(&op, C64::new(g, 0.0), &opts.solver);
    let mnorm = matrix_norm(sys.as_ref(), 12).max(1.0);
    let threshold = opts.critical_tol * mnorm;
    let sigma_at = |x: &[C64]| norm2(&sys.apply(x)) / norm2(x);
    let mut singular_values = vec![sigma_at(&v)];
    if singular_values[0] >= threshold {
        return Err(Error::NoCriticalCoupling { lo, hi });
    }
    let mut found = vec![v];
    let near = shifted_system(&op, C64::new(g * (1.0 + SUBSPACE_SHIFT), 0.0), &capped);
    let starts = crate::ls_solver::start_block(dim, opts.max_dim.max(1) + 1);
    for w0 in starts.iter().skip(1).take(opts.max_dim.saturating_sub(1)) {
        let mut w = w0.clone();
        deflate(&op, &found, &mut w);
        for _ in 0..2 {
            w = near.solve(&w, None).x;
            deflate(&op, &found, &mut w);
            normalize(&mut w);
        }
        let mut gj = g;
        for _ in 0..6 {
            let nu = rayleigh_quotient(&op, &w);
            if nu.re == 0.0 {
                break;
            }
            let g_new = 1.0 / nu.re;
            let done = (g_new - gj).abs() <= 1e-14 * gj.abs();
            gj = g_new;
            if done {
                break;
            }
            let res = shifted_system(&op, C64::new(gj, 0.0), &capped).solve(&w, Some(&w));
            if !res.x.iter().all(|z| z.is_finite()) {
                break;
            }
            w = res.x;
            deflate(&op, &found, &mut w);
            normalize(&mut w);
            if !res.converged {
                break;
            }
        }
        let sv = sigma_at(&w);
        singular_values.push(sv);
        if sv >= 10.0 * threshold {
            break;
        }
        found.push(w);
    }
    singular_values.sort_by(f64::total_cmp);
    let potential = unit.scale(g);
    let mut basis = Vec::new();
    let mut residuals = Vec::new();
    for x in &found {
        let mut x = x.clone();
        fix_phase(&mut x);
        let mut phi = op.apply_field(&op.scatter(&x))?.scale(C64::new(g, 0.0));
        for (s, i) in op.support.iter().enumerate() {
            phi.values[*i] = Spinor([x[4 * s], x[4 * s + 1], x[4 * s + 2], x[4 * s + 3]]);
        }
        let sup = phi.sup_norm();
        let phi = phi.scale(C64::new(1.0 / sup, 0.0));
        let xs = op.gather(&phi);
        let mx = sys.apply(&xs);
        let r = mx
            .chunks(4)
            .map(|c| Spinor([c[0], c[1], c[2], c[3]]).norm())
            .fold(0.0, f64::max);
        residuals.push(r);
        basis.push(phi);
    }
    build_structure(
        g,
        unit.clone(),
        potential,
        basis,
        singular_values,
        mnorm,
        residuals,
        opts.lambda_tol,
    )
}

#[allow(clippy::too_many_arguments)]
fn build_structure(
    coupling: f64,
    unit: SampledPotential,
    potential: SampledPotential,
    basis: Vec<SpinorField>,
    singular_values: Vec<f64>,
    matrix_norm: f64,
    residuals: Vec<f64>,
    lambda_tol: f64,
) -> Result<CriticalStructure> {
    let n = basis.len();
    let lambda_values = basis
        .iter()
        .map(|phi| lambda_of(phi, &potential))
        .collect::<Result<Vec<_>>>()?;
    let aphi = basis
        .iter()
        .map(|phi| potential.apply(phi))
        .collect::<Result<Vec<_>>>()?;
    let mut gram_m = DMatrix::zeros(n, n);
    let mut gram_n = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            gram_m[(p, q)] = pseudo_inner(&basis[p], &potential, &aphi[q])?;
            gram_n[(p, q)] = pseudo_inner(&basis[p], &potential, &basis[q])?;
        }
    }
    let mut crit = CriticalStructure {
        coupling,
        unit,
        potential,
        basis,
        lambda_values,
        lambda_bar: None,
        gram_m,
        gram_n,
        singular_values,
        matrix_norm,
        residuals,
    };
    crit.lambda_bar = classify_lambda_bar(&crit, lambda_tol).ok();
    Ok(crit)
}

/// `lambda(Phi) = int (1 + beta) A(y) Phi(y) dy`.
pub fn lambda_of(phi: &SpinorField, a: &SampledPotential) -> Result<Spinor> {
    check_same(&phi.grid, &a.grid)?;
    let mut acc = [ZERO; 2];
    for i in a.support() {
        let v = a.apply_at(i, &phi.values[i]);
        acc[0] += v.0[0];
        acc[1] += v.0[1];
    }
    let w = 2.0 * a.grid.cell_volume();
    Ok(Spinor([acc[0] * w, acc[1] * w, ZERO, ZERO]))
}

/// `0` when every `|lambda(Phi)|` is below `tol_rel ||A||_1 ||Phi||_inf`, `1` when every one is above.
pub fn classify_lambda_bar(crit: &CriticalStructure, tol_rel: f64) -> Result<u8> {
    let l1 = crit.potential.norms().l1;
    let small: Vec<bool> = crit
        .basis
        .iter()
        .zip(&crit.lambda_values)
        .map(|(phi, lam)| lam.norm() <= tol_rel * l1 * phi.sup_norm())
        .collect();
    if small.is_empty() {
        return Err(Error::InvalidInput("empty threshold space".into()));
    }
    if small.iter().all(|s| *s) {
        Ok(0)
    } else if small.iter().all(|s| !*s) {
        Ok(1)
    } else {
        Err(Error::InvalidInput(
            "threshold space mixes vanishing and non-vanishing lambda".into(),
        ))
    }
}

/// Gram matrices must be invertible for the direct-sum splittings.
pub fn check_class_c(crit: &CriticalStructure) -> Result<()> {
    for (name, m) in [("M", &crit.gram_m), ("N", &crit.gram_n)] {
        let sv = m.clone().singular_values();
        let (mx, mn) = (sv.max(), sv.min());
        if !(mn > 1e-12 * mx) || mx == 0.0 {
            return Err(Error::ClassCViolation(format!(
                "gram_{name} is singular (singular values {mn:e}..{mx:e})"
            )));
        }
    }
    Ok(())
}

/// Radial decay of a threshold state split as `Phi = Phi_1 + Phi_2`.
#[derive(Clone, Debug)]
pub struct DecayReport {
    pub lambda: Spinor,
    pub phi1: SpinorField,
    pub phi2: SpinorField,
    /// `(r, sup |Phi|, sup |Phi_1|, sup |Phi_2|)` per shell.
    pub shells: Vec<(f64, f64, f64, f64)>,
    pub exponent_phi: Option<f64>,
    pub exponent_phi1: Option<f64>,
    pub exponent_phi2: Option<f64>,
}

fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Aligned grid reaching `shells` shells of width `h` beyond twice the support radius.
pub fn decay_grid(a: &SampledPotential, shells: usize) -> Result<Grid3> {
    let h = a.grid.spacing();
    let rsupp = a.support().iter().map(|i| norm3(a.grid.point(*i))).fold(0.0, f64::max);
    let half = ((2.0 * rsupp / h).ceil() as usize + shells + 1) as f64 * h;
    let n = (2.0 * half / h).ceil() as usize;
    a.grid.resized(n | 1)
}

/// Split `Phi` on a large aligned grid into the `|x|^{-1}` tail
/// `Phi_2 = -lambda(Phi) / (4 pi |x|)` and the remainder, and fit decay exponents
/// of shell suprema beyond twice the support radius.
pub fn decay_decomposition(phi: &SpinorField, a: &SampledPotential, lambda_tol: f64) -> Result<DecayReport> {
    let on_a = phi.resample(a.grid)?;
    let lambda = lambda_of(&on_a, a)?;
    let support = a.support();
    let rsupp = support.iter().map(|i| norm3(a.grid.point(*i))).fold(0.0, f64::max);
    let g = phi.grid;
    let h = g.spacing();
    let lam_small = lambda.norm() <= lambda_tol * a.norms().l1 * phi.sup_norm();
    let phi2 = if lam_small {
        SpinorField::zeros(g)
    } else {
        SpinorField::from_fn(g, |x| {
            let r = norm3(x);
            if r == 0.0 {
                Spinor::ZERO
            } else {
                lambda * C64::new(-1.0 / (4.0 * PI * r), 0.0)
            }
        })
    };
    let phi1 = phi.sub(&phi2)?;
    let r0 = 2.0 * rsupp;
    let r1 = g.half_width;
    let nshell = ((r1 - r0) / h).floor() as usize;
    if nshell < 5 {
        return Err(Error::InvalidInput(format!(
            "evaluation grid half width {r1} leaves {nshell} shells beyond {r0}; need 5"
        )));
    }
    let mut acc = vec![(f64::INFINITY, 0.0f64, 0.0f64, 0.0f64); nshell];
    for idx in 0..g.len() {
        let r = norm3(g.point(idx));
        if r < r0 || r >= r0 + nshell as f64 * h {
            continue;
        }
        let s = ((r - r0) / h) as usize;
        let e = &mut acc[s.min(nshell - 1)];
        e.0 = e.0.min(r);
        e.1 = e.1.max(phi.values[idx].norm());
        e.2 = e.2.max(phi1.values[idx].norm());
        e.3 = e.3.max(phi2.values[idx].norm());
    }
    let shells: Vec<(f64, f64, f64, f64)> = acc.into_iter().filter(|e| e.0.is_finite()).collect();
    let fit =
        |sel: fn(&(f64, f64, f64, f64)) -> f64| loglog_slope(&shells.iter().map(|e| (e.0, sel(e))).collect::<Vec<_>>());
    Ok(DecayReport {
        lambda,
        exponent_phi: fit(|e| e.1),
        exponent_phi1: fit(|e| e.2),
        exponent_phi2: if lam_small { None } else { fit(|e| e.3) },
        phi1,
        phi2,
        shells,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    MParallel,
    MPerp,
    NParallel,
    NPerp,
}

/// `P_M` and `P_N` splittings on a fixed grid.
#[derive(Clone, Debug)]
pub struct Projectors {
    potential: SampledPotential,
    basis_a: Vec<SpinorField>,
    basis: Vec<SpinorField>,
    a_basis: Vec<SpinorField>,
    lu_m: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_n: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    pub grid: Grid3,
}

impl Projectors {
    pub fn new(crit: &CriticalStructure, grid: Grid3) -> Result<Self> {
        check_class_c(crit)?;
        let basis = crit.basis_on(grid)?;
        let a_basis = crit
            .basis
            .iter()
            .map(|phi| crit.potential.apply(phi)?.resample(grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Projectors {
            potential: crit.potential.clone(),
            basis_a: crit.basis.clone(),
            basis,
            a_basis,
            lu_m: crit.gram_m.clone().lu(),
            lu_n: crit.gram_n.clone().lu(),
            grid,
        })
    }

    fn pairings(&self, f: &SpinorField) -> Result<DMatrix<C64>> {
        let fa = if f.grid.same_as(&self.potential.grid) {
            f.clone()
        } else {
            f.resample(self.potential.grid)?
        };
        let b: Vec<C64> = self
            .basis_a
            .iter()
            .map(|phi| pseudo_inner(phi, &self.potential, &fa))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_column_slice(b.len(), 1, &b))
    }

    /// Coefficients `gamma_q` of `P_N^par f = sum gamma_q Phi_q`.
    pub fn coefficients_n(&self, f: &SpinorField) -> Result<Vec<C64>> {
        let b = self.pairings(f)?;
        let x = self
            .lu_n
            .solve(&b)
            .ok_or_else(|| Error::ClassCViolation("gram_N not invertible".into()))?;
        Ok(x.iter().cloned().collect())
    }

    /// Coefficients `gamma_q` of `P_M^par f = A sum gamma_q Phi_q`.
    pub fn coefficients_m(&self, f: &SpinorField) -> Result<Vec<C64>> {
        let b = self.pairings(f)?;
        let x = self
            .lu_m
            .solve(&b)
            .ok_or_else(|| Error::ClassCViolation("gram_M not invertible".into()))?;
        Ok(x.iter().cloned().collect())
    }

    pub fn project(&self, which: Split, f: &SpinorField) -> Result<SpinorField> {
        check_same(&f.grid, &self.grid)?;
        let (gam, fields) = match which {
            Split::MParallel | Split::MPerp => (self.coefficients_m(f)?, &self.a_basis),
            Split::NParallel | Split::NPerp => (self.coefficients_n(f)?, &self.basis),
        };
        let mut par = SpinorField::zeros(self.grid);
        for (c, phi) in gam.iter().zip(fields) {
            par.axpy(*c, phi)?;
        }
        match which {
            Split::MParallel | Split::NParallel => Ok(par),
            Split::MPerp | Split::NPerp => f.sub(&par),
        }
    }

    pub fn basis(&self) -> &[SpinorField] {
        &self.basis
    }
}

impl CriticalStructure {
    /// `sum_q c_q Phi_q` on the structure's grid.
    pub fn combine(&self, c: &[C64]) -> Result<SpinorField> {
        let mut out = SpinorField::zeros(self.grid());
        for (ci, phi) in c.iter().zip(&self.basis) {
            out.axpy(*ci, phi)?;
        }
        Ok(out)
    }

    /// Check the defining equation on the support with tolerance relative to `||Phi||_inf`.
    pub fn verify(&self, tol: f64) -> bool {
        self.residuals
            .iter()
            .zip(&self.basis)
            .all(|(r, phi)| *r <= tol * phi.sup_norm())
    }
}
