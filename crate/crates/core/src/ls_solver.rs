//! Discretised integral operator `T f(x) = int G(x - y) A(y) f(y) dy`, free plane-wave
//! solutions, and the Lippmann-Schwinger solve `(1 - T) phi = chi`.

use crate::error::{Error, Result};
use crate::green::Momentum;
use crate::grid::{check_same, Grid3, SpinorField};
use crate::kernel::{AssemblyInfo, KernelTable, LatticeConvolution};
use crate::krylov::{dot, gmres, norm2, GmresResult, GmresSettings};
use crate::potential::{pseudo_inner, SampledPotential};
use crate::spinor::{positive_energy_spinor, Spinor, C64, I, ONE, ZERO};
use nalgebra::DMatrix;
use std::sync::{Arc, Mutex};

/// Plane wave `u_j(k) e^{ik.x}` with `j` in {1, 2}.
pub fn free_solution(grid: Grid3, j: usize, kvec: [f64; 3]) -> Result<SpinorField> {
    let u = free_spinor(j, kvec)?;
    Ok(SpinorField::from_fn(grid, |x| {
        let ph = kvec[0] * x[0] + kvec[1] * x[1] + kvec[2] * x[2];
        u * C64::new(0.0, ph).exp()
    }))
}

/// Positive-energy spinor for spin label `j` in {1, 2}.
pub fn free_spinor(j: usize, kvec: [f64; 3]) -> Result<Spinor> {
    if !(1..=2).contains(&j) {
        return Err(Error::InvalidInput(format!("spin label must be 1 or 2, got {j}")));
    }
    if kvec.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite momentum".into()));
    }
    Ok(positive_energy_spinor(kvec, j - 1))
}

/// `d^m/dk^m chi(j, k khat, x)` along a fixed direction, `m` in 0..=3.
///
/// The spinor derivative uses a five-point stencil on the smooth closed-form
/// eigenvector; the plane-wave factor is differentiated exactly.
pub fn free_solution_dk(grid: Grid3, j: usize, khat: [f64; 3], k: f64, m: usize) -> Result<SpinorField> {
    let us = spinor_derivatives(j, khat, k)?;
    Ok(SpinorField::from_fn(grid, |x| {
        let p = khat[0] * x[0] + khat[1] * x[1] + khat[2] * x[2];
        let ip = C64::new(0.0, p);
        let mut acc = Spinor::ZERO;
        // d^m (u e^{ikp}) = sum_l C(m,l) u^{(m-l)} (ip)^l e^{ikp}
        let binom = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        for l in 0..=m {
            acc += us[m - l] * (ip.powu(l as u32) * binom[m][l]);
        }
        acc * C64::new(0.0, k * p).exp()
    }))
}

fn spinor_derivatives(j: usize, khat: [f64; 3], k: f64) -> Result<[Spinor; 4]> {
    let u = |t: f64| free_spinor(j, khat.map(|c| c * t));
    let d = 1e-3;
    let (um2, um1, u0, up1, up2) = (u(k - 2.0 * d)?, u(k - d)?, u(k)?, u(k + d)?, u(k + 2.0 * d)?);
    let d1 = (um2 - up2 + (up1 - um1) * 8.0) * (1.0 / (12.0 * d));
    let d2 = ((um2 + up2) * (-1.0) + (up1 + um1) * 16.0 - u0 * 30.0) * (1.0 / (12.0 * d * d));
    let d3 = (up2 - um2 - (up1 - um1) * 2.0) * (1.0 / (2.0 * d * d * d));
    Ok([u0, d1, d2, d3])
}

/// `T^A_{E_k}` (or its `order`-th k-derivative) restricted to the support of `A`.
pub struct IntegralOperator {
    pub potential: SampledPotential,
    pub momentum: Momentum,
    pub order: usize,
    /// Box-grid indices of nodes with `A != 0`.
    pub support: Vec<usize>,
    pub assembly: AssemblyInfo,
    table: KernelTable,
    conv: LatticeConvolution,
    adjoint_conv: Mutex<Option<Arc<LatticeConvolution>>>,
    transfer: Mutex<Option<(usize, Arc<LatticeConvolution>)>>,
}

/// Assemble `T^A_{E_k}` on the grid of `a`.
pub fn assemble_t(a: &SampledPotential, k: Momentum) -> IntegralOperator {
    assemble_dt(a, k, 0)
}

/// Assemble `d^order/dk^order T^A_{E_k}`.
pub fn assemble_dt(a: &SampledPotential, k: Momentum, order: usize) -> IntegralOperator {
    let n = a.grid.n;
    let h = a.grid.spacing();
    let table = KernelTable::new(k, h, order, (n - 1) as i64);
    let conv = LatticeConvolution::from_table(&table, n, n);
    IntegralOperator {
        potential: a.clone(),
        momentum: k,
        order,
        support: a.support(),
        assembly: AssemblyInfo::default(),
        table,
        conv,
        adjoint_conv: Mutex::new(None),
        transfer: Mutex::new(None),
    }
}

impl IntegralOperator {
    pub fn grid(&self) -> Grid3 {
        self.potential.grid
    }

    pub fn n_unknowns(&self) -> usize {
        4 * self.support.len()
    }

    /// Field values at the support nodes, flattened.
    pub fn gather(&self, f: &SpinorField) -> Vec<C64> {
        self.support.iter().flat_map(|i| f.values[*i].0).collect()
    }

    /// Field on the box that equals `x` on the support and vanishes elsewhere.
    pub fn scatter(&self, x: &[C64]) -> SpinorField {
        let mut f = SpinorField::zeros(self.grid());
        for (s, i) in self.support.iter().enumerate() {
            f.values[*i] = Spinor([x[4 * s], x[4 * s + 1], x[4 * s + 2], x[4 * s + 3]]);
        }
        f
    }

    fn weighted_source(&self, f: &SpinorField) -> Vec<Spinor> {
        let mut src = vec![Spinor::ZERO; self.grid().len()];
        for i in &self.support {
            src[*i] = self.potential.apply_at(*i, &f.values[*i]);
        }
        src
    }

    /// `T f` at every node of the box grid.
    pub fn apply_field(&self, f: &SpinorField) -> Result<SpinorField> {
        check_same(&f.grid, &self.grid())?;
        if self.support.is_empty() {
            return Ok(SpinorField::zeros(self.grid()));
        }
        let out = self.conv.apply(&self.weighted_source(f));
        Ok(SpinorField {
            grid: self.grid(),
            values: out,
        })
    }

    /// `T f` on an aligned evaluation grid of any size.
    pub fn apply_to(&self, f: &SpinorField, eval: Grid3) -> Result<SpinorField> {
        check_same(&f.grid, &self.grid())?;
        if !eval.is_aligned(&self.grid()) {
            return Err(Error::GridMismatch(format!(
                "evaluation spacing {} differs from operator spacing {}",
                eval.spacing(),
                self.grid().spacing()
            )));
        }
        if self.support.is_empty() {
            return Ok(SpinorField::zeros(eval));
        }
        if eval.n == self.grid().n {
            return self.apply_field(f);
        }
        let conv = {
            let mut cache = self.transfer.lock().expect("transfer cache poisoned");
            match cache.as_ref() {
                Some((n, c)) if *n == eval.n => c.clone(),
                _ => {
                    let c = Arc::new(LatticeConvolution::new(
                        self.momentum,
                        self.grid().spacing(),
                        self.order,
                        self.grid().n,
                        eval.n,
                    ));
                    *cache = Some((eval.n, c.clone()));
                    c
                }
            }
        };
        Ok(SpinorField {
            grid: eval,
            values: conv.apply(&self.weighted_source(f)),
        })
    }

    /// `T x` for support vectors.
    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let f = self.scatter(x);
        let out = self.conv.apply(&self.weighted_source(&f));
        self.support.iter().flat_map(|i| out[*i].0).collect()
    }

    /// `T^dagger x = A K^dagger x` for support vectors (Euclidean adjoint).
    pub fn apply_adjoint_vec(&self, x: &[C64]) -> Vec<C64> {
        let conv = {
            let mut cache = self.adjoint_conv.lock().expect("adjoint cache poisoned");
            cache
                .get_or_insert_with(|| {
                    let n = self.grid().n;
                    Arc::new(LatticeConvolution::from_table(&self.table.adjoint(), n, n))
                })
                .clone()
        };
        let f = self.scatter(x);
        let out = conv.apply(&f.values);
        self.support
            .iter()
            .flat_map(|i| self.potential.apply_at(*i, &out[*i]).0)
            .collect()
    }

    /// Dense matrix of `T` on the support unknowns.
    pub fn dense(&self) -> DMatrix<C64> {
        let ns = self.support.len();
        let g = self.grid();
        let mut m = DMatrix::zeros(4 * ns, 4 * ns);
        for (a, i) in self.support.iter().enumerate() {
            let oi = g.offset(*i);
            for (b, j) in self.support.iter().enumerate() {
                let oj = g.offset(*j);
                let w = self.table.get([oi[0] - oj[0], oi[1] - oj[1], oi[2] - oj[2]]);
                let block = (w.to_matrix() * self.potential.combo(*j).to_matrix()).0;
                for r in 0..4 {
                    for c in 0..4 {
                        m[(4 * a + r, 4 * b + c)] = block[r][c];
                    }
                }
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMode {
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub mode: SolverMode,
    pub gmres: GmresSettings,
    /// Nodes per axis of the evaluation grid; `None` means `2 n + 1`.
    pub eval_n: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            mode: SolverMode::Iterative,
            gmres: GmresSettings::default(),
            eval_n: None,
        }
    }
}

impl SolverSettings {
    pub fn eval_grid(&self, support: Grid3) -> Result<Grid3> {
        support.resized(self.eval_n.unwrap_or(2 * support.n + 1))
    }
}

/// Smallest singular value below which a system counts as singular, relative to `||M||`.
pub const RESONANCE_TOL: f64 = 1e-10;

/// `M = 1 - c T` on the support unknowns, solvable and adjoint-solvable.
pub trait ShiftedSystem {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64>;
    fn solve(&self, b: &[C64], x0: Option<&[C64]>) -> GmresResult;
    fn solve_adjoint(&self, b: &[C64], x0: Option<&[C64]>) -> GmresResult;
}

/// Matrix-free system solved by GMRES.
pub struct IterativeSystem<'a> {
    pub op: &'a IntegralOperator,
    pub c: C64,
    pub settings: GmresSettings,
}

impl ShiftedSystem for IterativeSystem<'_> {
    fn dim(&self) -> usize {
        self.op.n_unknowns()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let t = self.op.apply_vec(x);
        x.iter().zip(&t).map(|(a, b)| a - self.c * b).collect()
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let t = self.op.apply_adjoint_vec(x);
        let cc = self.c.conj();
        x.iter().zip(&t).map(|(a, b)| a - cc * b).collect()
    }
    fn solve(&self, b: &[C64], x0: Option<&[C64]>) -> GmresResult {
        gmres(|x| self.apply(x), b, x0, self.settings)
    }
    fn solve_adjoint(&self, b: &[C64], x0: Option<&[C64]>) -> GmresResult {
        gmres(|x| self.apply_adjoint(x), b, x0, self.settings)
    }
}

/// Dense system with cached LU factors of `M` and `M^dagger`.
pub struct DenseSystem {
    m: DMatrix<C64>,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_adj: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseSystem {
    pub fn new(op: &IntegralOperator, c: C64) -> Self {
        let n = op.n_unknowns();
        let m = DMatrix::<C64>::identity(n, n) - op.dense() * c;
        let lu = m.clone().lu();
        let lu_adj = m.adjoint().lu();
        DenseSystem { m, lu, lu_adj }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    fn finish(&self, x: Option<DMatrix<C64>>, b: &[C64], adjoint: bool) -> GmresResult {
        let n = b.len();
        match x {
            Some(x) => {
                let x: Vec<C64> = x.iter().cloned().collect();
                let r = if adjoint {
                    self.apply_adjoint(&x)
                } else {
                    self.apply(&x)
                };
                let res = norm2(&r.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
                let bn = norm2(b).max(f64::MIN_POSITIVE);
                GmresResult {
                    x,
                    iterations: 0,
                    relative_residual: res / bn,
                    converged: true,
                }
            }
            None => GmresResult {
                x: vec![ZERO; n],
                iterations: 0,
                relative_residual: 1.0,
                converged: false,
            },
        }
    }
}

impl ShiftedSystem for DenseSystem {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (&self.m * DMatrix::from_column_slice(x.len(), 1, x))
            .iter()
            .cloned()
            .collect()
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        (self.m.adjoint() * DMatrix::from_column_slice(x.len(), 1, x))
            .iter()
            .cloned()
            .collect()
    }
    fn solve(&self, b: &[C64], _x0: Option<&[C64]>) -> GmresResult {
        self.finish(self.lu.solve(&DMatrix::from_column_slice(b.len(), 1, b)), b, false)
    }
    fn solve_adjoint(&self, b: &[C64], _x0: Option<&[C64]>) -> GmresResult {
        self.finish(self.lu_adj.solve(&DMatrix::from_column_slice(b.len(), 1, b)), b, true)
    }
}

/// Build `1 - c T` in the requested mode.
pub fn shifted_system<'a>(op: &'a IntegralOperator, c: C64, settings: &SolverSettings) -> Box<dyn ShiftedSystem + 'a> {
    match settings.mode {
        SolverMode::Dense => Box::new(DenseSystem::new(op, c)),
        SolverMode::Iterative => Box::new(IterativeSystem {
            op,
            c,
            settings: settings.gmres,
        }),
    }
}

/// Smallest singular values and right singular vectors of a shifted system.
#[derive(Clone, Debug)]
pub struct SingularEstimate {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    /// Estimate of `||M||_2` from the same iteration.
    pub norm_estimate: f64,
}

/// Orthonormalise in place (modified Gram-Schmidt, two passes); drops dependent vectors.
pub fn orthonormalize(vs: &mut Vec<Vec<C64>>) {
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(vs.len());
    for mut v in vs.drain(..) {
        let n0 = norm2(&v);
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                crate::krylov::axpy(&mut v, -c, q);
            }
        }
        let n = norm2(&v);
        if n > 1e-12 * n0 && n > 0.0 {
            crate::krylov::scale(&mut v, C64::new(1.0 / n, 0.0));
            out.push(v);
        }
    }
    *vs = out;
}

/// Deterministic start vectors.
pub fn start_block(dim: usize, block: usize) -> Vec<Vec<C64>> {
    (0..block)
        .map(|b| {
            (0..dim)
                .map(|i| {
                    let t = i as f64 * 0.7548776662 + b as f64 * 0.5698402910;
                    C64::new((t * 12.9898).sin(), (t * 78.233).cos())
                })
                .collect()
        })
        .collect()
}

/// Rayleigh-Ritz for `M^dagger M` on an orthonormal block: returns ascending
/// singular values and rotated vectors.
pub fn rayleigh_ritz(sys: &dyn ShiftedSystem, basis: &[Vec<C64>]) -> (Vec<f64>, Vec<Vec<C64>>) {
    let b = basis.len();
    let images: Vec<Vec<C64>> = basis.iter().map(|v| sys.apply(v)).collect();
    let mut g = DMatrix::<C64>::zeros(b, b);
    for p in 0..b {
        for q in 0..b {
            g[(p, q)] = dot(&images[p], &images[q]);
        }
    }
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|x, y| {
        eig.eigenvalues[*x]
            .partial_cmp(&eig.eigenvalues[*y])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(b);
    let mut vectors = Vec::with_capacity(b);
    for &c in &order {
        let mut v = vec![ZERO; basis[0].len()];
        for p in 0..b {
            crate::krylov::axpy(&mut v, eig.eigenvectors[(p, c)], &basis[p]);
        }
        // the image norm is more accurate than the square root of a tiny eigenvalue
        let s = norm2(&sys.apply(&v)) / norm2(&v);
        values.push(s);
        vectors.push(v);
    }
    (values, vectors)
}

/// Block inverse iteration on `(M^dagger M)^{-1}`.
pub fn smallest_singular(
    sys: &dyn ShiftedSystem,
    block: usize,
    iterations: usize,
    start: Option<Vec<Vec<C64>>>,
) -> SingularEstimate {
    let dim = sys.dim();
    let mut v = start.unwrap_or_else(|| start_block(dim, block));
    v.truncate(block);
    let extra = start_block(dim, block);
    let mut e = 0;
    while v.len() < block {
        v.push(extra[e].clone());
        e += 1;
    }
    orthonormalize(&mut v);
    let mut norm_est: f64 = 0.0;
    for _ in 0..iterations {
        let mut w: Vec<Vec<C64>> = v
            .iter()
            .map(|x| {
                let y = sys.solve_adjoint(x, None).x;
                sys.solve(&y, None).x
            })
            .collect();
        for x in &v {
            let mx = norm2(&sys.apply(x));
            norm_est = norm_est.max(mx);
        }
        orthonormalize(&mut w);
        if w.is_empty() {
            break;
        }
        v = w;
    }
    let (values, vectors) = rayleigh_ritz(sys, &v);
    norm_est = norm_est.max(values.last().cloned().unwrap_or(0.0));
    SingularEstimate {
        values,
        vectors,
        norm_estimate: norm_est.max(1.0),
    }
}

/// Diagnostics of a Lippmann-Schwinger solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveDiagnostics {
    /// `||phi||_inf` on the evaluation grid.
    pub sup_norm: f64,
    /// `||(1 - T) phi - chi||_inf` on the support nodes.
    pub residual: f64,
    /// `||M||` lower estimate times `||phi|| / ||chi||`.
    pub condition_estimate: f64,
    pub at_resonance: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct GeneralizedSolution {
    /// `phi` on the support box, extended by `chi + T phi` off the support.
    pub phi_box: SpinorField,
    pub phi_eval: SpinorField,
    pub chi_eval: SpinorField,
    pub diagnostics: SolveDiagnostics,
}

/// Solve `(1 - c T) phi = rhs` on the support and extend by `phi = rhs + c T phi`.
///
/// `rhs_box` and `rhs_eval` are the same inhomogeneity sampled on the box and on
/// the evaluation grid.
pub fn solve_shifted(
    op: &IntegralOperator,
    c: C64,
    rhs_box: &SpinorField,
    rhs_eval: &SpinorField,
    settings: &SolverSettings,
    x0: Option<&[C64]>,
) -> Result<GeneralizedSolution> {
    check_same(&rhs_box.grid, &op.grid())?;
    let sys = shifted_system(op, c, settings);
    let b = op.gather(rhs_box);
    let mut res = sys.solve(&b, x0);
    let bnorm = norm2(&b);
    let xnorm = norm2(&res.x);
    let mnorm = if bnorm > 0.0 {
        (norm2(&sys.apply(&b)) / bnorm).max(1.0)
    } else {
        1.0
    };
    let sigma_upper = if xnorm > 0.0 { bnorm / xnorm } else { f64::INFINITY };
    let mut at_resonance = !res.converged || sigma_upper < RESONANCE_TOL * mnorm || xnorm > 1e10 * bnorm;
    if settings.mode == SolverMode::Dense && !res.converged {
        // least-squares fallback for a singular dense system
        let m = DenseSystem::new(op, c).m;
        let svd = m.svd(true, true);
        let rhs = DMatrix::from_column_slice(b.len(), 1, &b);
        let tol = RESONANCE_TOL * svd.singular_values.max();
        if let Ok(x) = svd.solve(&rhs, tol) {
            res.x = x.iter().cloned().collect();
        }
        at_resonance = true;
    }
    let mut phi_box = op.apply_field(&op.scatter(&res.x))?;
    for (p, r) in phi_box.values.iter_mut().zip(&rhs_box.values) {
        *p = *p * c + *r;
    }
    let mut residual: f64 = 0.0;
    let ax = sys.apply(&res.x);
    for (s, _) in op.support.iter().enumerate() {
        let d = Spinor([
            ax[4 * s] - b[4 * s],
            ax[4 * s + 1] - b[4 * s + 1],
            ax[4 * s + 2] - b[4 * s + 2],
            ax[4 * s + 3] - b[4 * s + 3],
        ]);
        residual = residual.max(d.norm());
    }
    // phi_box equals x on the support up to the solve residual; keep x there exactly
    for (s, i) in op.support.iter().enumerate() {
        phi_box.values[*i] = Spinor([res.x[4 * s], res.x[4 * s + 1], res.x[4 * s + 2], res.x[4 * s + 3]]);
    }
    let mut phi_eval = op.apply_to(&phi_box, rhs_eval.grid)?;
    for (p, r) in phi_eval.values.iter_mut().zip(&rhs_eval.values) {
        *p = *p * c + *r;
    }
    let diagnostics = SolveDiagnostics {
        sup_norm: phi_eval.sup_norm(),
        residual,
        condition_estimate: mnorm / sigma_upper,
        at_resonance,
        iterations: res.iterations,
    };
    Ok(GeneralizedSolution {
        phi_box,
        phi_eval,
        chi_eval: rhs_eval.clone(),
        diagnostics,
    })
}

/// Solve `(1 - T^{A+B}_{E_k}) phi = chi(j, k)` and extend to the evaluation grid.
pub fn solve_generalized(
    a: &SampledPotential,
    b: &SampledPotential,
    j: usize,
    kvec: [f64; 3],
    settings: &SolverSettings,
) -> Result<GeneralizedSolution> {
    let total = a.add(b)?;
    let k = (kvec[0] * kvec[0] + kvec[1] * kvec[1] + kvec[2] * kvec[2]).sqrt();
    let op = assemble_t(&total, Momentum::real(k));
    let eval = settings.eval_grid(a.grid)?;
    let chi_box = free_solution(a.grid, j, kvec)?;
    let chi_eval = free_solution(eval, j, kvec)?;
    solve_shifted(&op, ONE, &chi_box, &chi_eval, settings, None)
}

/// `(<h, A, T^B g>, <T^A h, B, g>)`, each evaluated by its own quadrature.
pub fn symmetry_probe(
    a: &SampledPotential,
    b: &SampledPotential,
    k: Momentum,
    h: &SpinorField,
    g: &SpinorField,
) -> Result<(C64, C64)> {
    check_same(&a.grid, &b.grid)?;
    let tb = assemble_t(b, k);
    let ta = assemble_t(a, k);
    let left = pseudo_inner(h, a, &tb.apply_field(g)?)?;
    let right = pseudo_inner(&ta.apply_field(h)?, b, g)?;
    Ok((left, right))
}

/// `max |(E - D0) T f - A f| / max |A f|` over nodes with `|x| <= radius`, with `D0 = -i alpha.grad + beta`
/// applied to `T f` by fourth-order central differences.
pub fn defect_residual(a: &SampledPotential, f: &SpinorField, k: Momentum, radius: f64) -> Result<f64> {
    check_same(&a.grid, &f.grid)?;
    let g = a.grid;
    let h = g.spacing();
    let u = assemble_t(a, k).apply_field(f)?;
    let af = a.apply(f)?;
    let e = k.energy();
    let c = g.center() as i64;
    let mut worst: f64 = 0.0;
    let scale = af.sup_norm();
    for idx in 0..g.len() {
        let x = g.point(idx);
        if crate::grid::norm3(x) > radius {
            continue;
        }
        let o = g.offset(idx);
        if o.iter().any(|v| (v + c) < 2 || (v + c) > g.n as i64 - 3) {
            return Err(Error::SupportExceedsGrid(format!(
                "probe radius {radius} reaches the grid boundary"
            )));
        }
        let mut du = Spinor::ZERO;
        for l in 0..3 {
            let at = |s: i64| {
                let mut q = o;
                q[l] += s;
                u.values[g.index_of_offset(q).expect("interior node")]
            };
            let mut d = [ZERO; 4];
            for r in 0..4 {
                d[r] = (8.0 * (at(1).0[r] - at(-1).0[r]) - (at(2).0[r] - at(-2).0[r])) / (12.0 * h);
            }
            let ad = Spinor(d).alpha(l);
            for r in 0..4 {
                du.0[r] += -I * ad.0[r];
            }
        }
        let bu = u.values[idx].beta();
        let mut res = 0.0f64;
        for r in 0..4 {
            let v = e * u.values[idx].0[r] - du.0[r] - bu.0[r] - af.values[idx].0[r];
            res = res.max(v.norm());
        }
        worst = worst.max(res);
    }
    Ok(worst / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::FourPotential;
    use crate::spinor::free_dirac_symbol;

    fn grid() -> Grid3 {
        Grid3::new(9, 1.2).unwrap()
    }

    #[test]
    fn defect_identity_converges() {
        let mut g = Grid3::new(9, 1.6).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let a = FourPotential::gaussian_bump(1.0, 0.5, 1.4).sample(g).unwrap();
            let f = SpinorField::from_fn(g, |x| {
                let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 0.25).exp();
                Spinor([
                    C64::new(e, 0.0),
                    C64::new(0.0, 0.3 * e),
                    ZERO,
                    C64::new(0.2 * e * x[0], 0.0),
                ])
            });
            let r = defect_residual(&a, &f, Momentum::real(0.5), 0.6).unwrap();
            assert!(r * 3.0 <= last, "{r} vs {last}");
            last = r;
            g = g.refined();
        }
    }

    #[test]
    fn free_solution_at_rest_is_constant_upper_spinor() {
        let f = free_solution(grid(), 1, [0.0; 3]).unwrap();
        assert!(f.values.iter().all(|s| *s == Spinor::basis(0)));
    }

    #[test]
    fn free_spinors_are_orthonormal_eigenvectors() {
        let k = [0.3, -0.5, 0.8];
        let e = (1.0 + 0.09 + 0.25 + 0.64f64).sqrt();
        let u1 = free_spinor(1, k).unwrap();
        let u2 = free_spinor(2, k).unwrap();
        for u in [u1, u2] {
            assert!((free_dirac_symbol(k).mul_spinor(&u) - u * e).norm() < 1e-13);
        }
        assert!(u1.dot(&u2).norm() < 1e-14);
        assert!(free_spinor(3, k).is_err());
    }

    #[test]
    fn zero_potential_gives_zero_operator() {
        let z = SampledPotential::zeros(grid());
        let op = assemble_t(&z, Momentum::real(0.3));
        let f = free_solution(grid(), 1, [0.0, 0.0, 0.3]).unwrap();
        assert_eq!(op.apply_field(&f).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn matrix_free_matches_dense() {
        let a = FourPotential::gaussian_bump(0.8, 0.5, 1.0).sample(grid()).unwrap();
        let op = assemble_t(&a, Momentum::real(0.5));
        let x: Vec<C64> = (0..op.n_unknowns())
            .map(|i| C64::new((i as f64).sin(), (0.3 * i as f64).cos()))
            .collect();
        let y1 = op.apply_vec(&x);
        let y2: Vec<C64> = (op.dense() * DMatrix::from_column_slice(x.len(), 1, &x))
            .iter()
            .cloned()
            .collect();
        let d: Vec<C64> = y1.iter().zip(&y2).map(|(p, q)| p - q).collect();
        assert!(norm2(&d) < 1e-12 * norm2(&y2));
        let z1 = op.apply_adjoint_vec(&x);
        let z2: Vec<C64> = (op.dense().adjoint() * DMatrix::from_column_slice(x.len(), 1, &x))
            .iter()
            .cloned()
            .collect();
        let d: Vec<C64> = z1.iter().zip(&z2).map(|(p, q)| p - q).collect();
        assert!(norm2(&d) < 1e-12 * norm2(&z2));
    }

    #[test]
    fn linearity_in_the_potential() {
        let g = grid();
        let a = FourPotential::gaussian_bump(0.8, 0.5, 1.0).sample(g).unwrap();
        let b = SampledPotential::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let w = if r2 < 1.0 { (1.0 - r2).powi(2) } else { 0.0 };
            [0.2 * w, 0.1 * w, 0.0, -0.3 * w]
        })
        .unwrap();
        let k = Momentum::real(0.2);
        let ta = assemble_t(&a, k);
        let tb = assemble_t(&b, k);
        // expand each onto the union support
        let f = SpinorField::from_fn(g, |x| Spinor::basis(1) * C64::new(1.0 + x[0], x[2]));
        let lhs = assemble_t(&a.add(&b).unwrap(), k).apply_field(&f).unwrap();
        let rhs = ta.apply_field(&f).unwrap().add(&tb.apply_field(&f).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-13 * lhs.sup_norm());
    }

    #[test]
    fn dense_and_iterative_solves_agree() {
        let g = grid();
        let a = FourPotential::gaussian_bump(1.5, 0.5, 1.0).sample(g).unwrap();
        let z = SampledPotential::zeros(g);
        let kv = [0.0, 0.0, 0.4];
        let it = solve_generalized(&a, &z, 1, kv, &SolverSettings::default()).unwrap();
        let de = solve_generalized(
            &a,
            &z,
            1,
            kv,
            &SolverSettings {
                mode: SolverMode::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(it.phi_eval.sub(&de.phi_eval).unwrap().sup_norm() < 1e-9 * de.diagnostics.sup_norm);
        assert!(it.diagnostics.residual < 1e-8 && de.diagnostics.residual < 1e-8);
        assert!(!it.diagnostics.at_resonance);
    }

    #[test]
    fn free_case_returns_chi() {
        let g = grid();
        let z = SampledPotential::zeros(g);
        let kv = [0.1, 0.2, 0.3];
        let s = solve_generalized(&z, &z, 2, kv, &SolverSettings::default()).unwrap();
        let chi = free_solution(s.phi_eval.grid, 2, kv).unwrap();
        assert_eq!(s.phi_eval, chi);
    }

    #[test]
    fn evaluation_grid_must_align() {
        let a = FourPotential::gaussian_bump(1.0, 0.5, 1.0).sample(grid()).unwrap();
        let op = assemble_t(&a, Momentum::real(0.1));
        let f = SpinorField::zeros(grid());
        assert!(matches!(
            op.apply_to(&f, Grid3::new(21, 2.0).unwrap()),
            Err(Error::GridMismatch(_))
        ));
        assert!(op.apply_to(&f, grid().resized(21).unwrap()).is_ok());
    }

    #[test]
    fn spinor_derivative_matches_difference() {
        let khat = [0.0, 0.6, 0.8];
        let g = Grid3::new(5, 1.0).unwrap();
        let k = 0.3;
        let d = 1e-4;
        let p = free_solution(g, 1, khat.map(|c| c * (k + d))).unwrap();
        let m = free_solution(g, 1, khat.map(|c| c * (k - d))).unwrap();
        let fd = p.sub(&m).unwrap().scale(C64::new(0.5 / d, 0.0));
        let an = free_solution_dk(g, 1, khat, k, 1).unwrap();
        assert!(fd.sub(&an).unwrap().sup_norm() < 1e-7);
    }
}
