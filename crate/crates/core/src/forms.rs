//! Taylor coefficients at `k = 0` of `k -> <Phi_p, A, T^A_{E_k} Phi_q>` on the
//! threshold space, the split of the cubic form, and the resonance slopes `gamma_l`.
//!
//! The canonical forms are the derivative coefficients
//! `Q1 = <., A, dT .>`, `R = <., A, d^2T .> / 2`, `S = <., A, d^3T .> / 6`.
//! The cubic form in the sign convention of the split, `s = -S`, is reported
//! next to them.

use crate::criticality::CriticalStructure;
use crate::error::{Error, Result};
use crate::green::Momentum;
use crate::grid::SpinorField;
use crate::ls_solver::assemble_dt;
use crate::potential::{pseudo_inner, SampledPotential};
use crate::spinor::{Spinor, C64, I, ZERO};
use nalgebra::DMatrix;
use std::f64::consts::PI;

const FACTORIAL: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

/// `(1/order!) <Phi_p, A, [d^order T^A_{E_k}]_{k=0} Phi_q>` for `order` in 1..=3.
pub fn taylor_form(crit: &CriticalStructure, order: usize) -> Result<DMatrix<C64>> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!("form order {order} not in 1..=3")));
    }
    let op = assemble_dt(&crit.potential, Momentum::default(), order);
    let images = crit
        .basis
        .iter()
        .map(|phi| op.apply_field(phi))
        .collect::<Result<Vec<_>>>()?;
    pairing_matrix(&crit.basis, &crit.potential, &images, 1.0 / FACTORIAL[order])
}

fn pairing_matrix(
    basis: &[SpinorField],
    a: &SampledPotential,
    images: &[SpinorField],
    factor: f64,
) -> Result<DMatrix<C64>> {
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            m[(p, q)] = pseudo_inner(&basis[p], a, &images[q])? * factor;
        }
    }
    Ok(m)
}

/// `<Phi_p, A, T^A_{E_k} Phi_q>` at real `k` (either sign).
pub fn pairing_at(crit: &CriticalStructure, k: f64) -> Result<DMatrix<C64>> {
    let op = assemble_dt(&crit.potential, Momentum::real(k), 0);
    let images = crit
        .basis
        .iter()
        .map(|phi| op.apply_field(phi))
        .collect::<Result<Vec<_>>>()?;
    pairing_matrix(&crit.basis, &crit.potential, &images, 1.0)
}

/// Finite-difference oracle for [`taylor_form`]: Richardson-extrapolated central
/// differences of [`pairing_at`] with steps `step` and `step / 2`.
pub fn taylor_form_fd(crit: &CriticalStructure, order: usize, step: f64) -> Result<DMatrix<C64>> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!("form order {order} not in 1..=3")));
    }
    let f = |k: f64| pairing_at(crit, k);
    let d = |h: f64| -> Result<DMatrix<C64>> {
        let c = |x: f64| C64::new(x, 0.0);
        Ok(match order {
            1 => (f(h)? - f(-h)?) * c(0.5 / h),
            2 => (f(h)? - f(0.0)? * c(2.0) + f(-h)?) * c(1.0 / (h * h)),
            _ => (f(2.0 * h)? - f(h)? * c(2.0) + f(-h)? * c(2.0) - f(-2.0 * h)?) * c(0.5 / (h * h * h)),
        })
    };
    let coarse = d(step)?;
    let fine = d(0.5 * step)?;
    Ok((fine * C64::new(4.0, 0.0) - coarse) * C64::new(1.0 / (3.0 * FACTORIAL[order]), 0.0))
}

/// The three parts of the cubic form `s(Phi, Phi) = s1 + s2 + s3` for one threshold state.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSplit {
    pub s1: C64,
    pub s2: C64,
    pub s3: C64,
    /// `s1 = i C2`, from the moment vectors `xi`.
    pub c2: f64,
    /// `s3 = i C3`.
    pub c3: f64,
    pub c1: f64,
    /// `xi_l = (12 pi)^{-1/2} int x_l A Phi`.
    pub xi: [Spinor; 3],
    /// `i <xi (1 + beta), xi>` computed from `xi` alone.
    pub s1_from_xi: C64,
}

/// Split of `s(Phi, Phi) = -(1/6) <Phi, A, d^3T Phi>` by nested quadrature of the point
/// kernel `d^3G(z)|_{k=0} = (1/4 pi)(i |z|^2 (1 + beta) - 3i + 2 alpha.z)`.
///
/// Requires `lambda(Phi) = 0`, which removes the `|x|^2` and `|y|^2` parts of the first term.
pub fn s_split(a: &SampledPotential, phi: &SpinorField, lambda_tol: f64) -> Result<CubicSplit> {
    let lambda = crate::criticality::lambda_of(phi, a)?;
    if lambda.norm() > lambda_tol * a.norms().l1 * phi.sup_norm() {
        return Err(Error::InvalidInput(format!(
            "lambda(Phi) = {:e} is not zero",
            lambda.norm()
        )));
    }
    let support = a.support();
    let w = a.grid.cell_volume();
    let pts: Vec<[f64; 3]> = support.iter().map(|i| a.grid.point(*i)).collect();
    let dens: Vec<Spinor> = support.iter().map(|i| a.apply_at(*i, &phi.values[*i]) * w).collect();
    let upper = |s: &Spinor| Spinor([s.0[0], s.0[1], ZERO, ZERO]);

    // nested sums over the support
    let (mut t1, mut t2, mut t3) = (ZERO, ZERO, ZERO);
    for (x, fx) in pts.iter().zip(&dens) {
        let ux = upper(fx);
        for (y, fy) in pts.iter().zip(&dens) {
            let z = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            let z2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
            // F(x)^dag (1 + beta) F(y) = 2 u(x)^dag u(y)
            t1 += ux.dot(&upper(fy)) * (2.0 * z2);
            let mut az = Spinor::ZERO;
            for (l, zl) in z.iter().enumerate() {
                az += fy.alpha(l) * *zl;
            }
            t2 += fx.dot(&az) * 2.0;
            t3 += fx.dot(fy);
        }
    }
    let pre = C64::new(-1.0 / (6.0 * 4.0 * PI), 0.0);
    let s1 = pre * I * t1;
    let s2 = pre * t2;
    let s3 = pre * (-3.0) * I * t3;

    let mut xi = [Spinor::ZERO; 3];
    for (x, fx) in pts.iter().zip(&dens) {
        for l in 0..3 {
            xi[l] += *fx * (x[l] / (12.0 * PI).sqrt());
        }
    }
    let c2: f64 = xi.iter().map(|v| 2.0 * upper(v).norm_sqr()).sum();
    let v: Spinor = dens.iter().fold(Spinor::ZERO, |acc, f| acc + *f);
    let c3 = v.norm_sqr() / (8.0 * PI);
    Ok(CubicSplit {
        s1,
        s2,
        s3,
        c2,
        c3,
        c1: c2 + c3,
        xi,
        s1_from_xi: I * c2,
    })
}

/// Resonance data of the perturbation `mu B0` on the threshold space.
#[derive(Clone, Debug)]
pub struct GammaSpectrum {
    /// `<e_p, B0, e_q>` in an `L^2`-orthonormal frame `e` of `N`.
    pub b0hat: DMatrix<C64>,
    /// `r(e_p, e_q)` in the same frame.
    pub rhat: DMatrix<C64>,
    pub mhat: DMatrix<C64>,
    pub nhat: DMatrix<C64>,
    /// Ascending eigenvalues of `mhat`.
    pub gammas: Vec<f64>,
}

/// `B0hat`, `Mhat = (B0hat^{-1} Rhat + Rhat B0hat^{-1}) / 2`, `Nhat` and the `gamma_l`.
///
/// `r` is the canonical second-order form in the basis of `crit`. The frame is
/// the symmetric (Lowdin) orthonormalisation of the basis on the potential grid.
pub fn gamma_spectrum(crit: &CriticalStructure, b0: &SampledPotential, r: &DMatrix<C64>) -> Result<GammaSpectrum> {
    let n = crit.dim();
    if n == 0 || r.nrows() != n || r.ncols() != n {
        return Err(Error::InvalidInput(
            "form matrix does not match the threshold space".into(),
        ));
    }
    let mut gram = DMatrix::zeros(n, n);
    let mut bmat = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            gram[(p, q)] = crit.basis[p].inner(&crit.basis[q])?;
            bmat[(p, q)] = pseudo_inner(&crit.basis[p], b0, &crit.basis[q])?;
        }
    }
    let eig = hermitian(&gram).symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(1.0 / l.sqrt(), 0.0)));
    let vecs = &eig.eigenvectors;
    let c = vecs * inv_sqrt * vecs.adjoint();
    let b0hat = hermitian(&(c.adjoint() * &bmat * &c));
    let rhat = hermitian(&(c.adjoint() * r * &c));
    let binv = b0hat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("B0hat is singular on the threshold space".into()))?;
    let x = &binv * &rhat;
    let xt = &rhat * &binv;
    let half = C64::new(0.5, 0.0);
    let mhat = (&x + &xt) * half;
    let nhat = (&x - &xt) * half;
    let mut gammas: Vec<f64> = hermitian(&mhat).symmetric_eigen().eigenvalues.iter().cloned().collect();
    gammas.sort_by(f64::total_cmp);
    Ok(GammaSpectrum {
        b0hat,
        rhat,
        mhat,
        nhat,
        gammas,
    })
}

fn hermitian(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// All forms of a critical structure.
#[derive(Clone, Debug)]
pub struct PerturbationForms {
    pub q1: DMatrix<C64>,
    pub r: DMatrix<C64>,
    pub s: DMatrix<C64>,
    /// One split per basis element when `lambda` vanishes on `N`.
    pub splits: Vec<CubicSplit>,
    pub spectrum: GammaSpectrum,
}

/// Forms with the perturbation `B0` (usually the critical potential itself).
pub fn perturbation_forms(
    crit: &CriticalStructure,
    b0: &SampledPotential,
    lambda_tol: f64,
) -> Result<PerturbationForms> {
    let q1 = taylor_form(crit, 1)?;
    let r = taylor_form(crit, 2)?;
    let s = taylor_form(crit, 3)?;
    let splits = if crit.lambda_bar == Some(0) {
        crit.basis
            .iter()
            .map(|phi| s_split(&crit.potential, phi, lambda_tol))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let spectrum = gamma_spectrum(crit, b0, &r)?;
    Ok(PerturbationForms {
        q1,
        r,
        s,
        splits,
        spectrum,
    })
}

/// `max |M - M^dagger| / max |M|`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// `max |M + M^dagger| / max |M|`.
pub fn anti_hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    (m + m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::{find_critical_coupling, CriticalOptions};
    use crate::grid::Grid3;
    use crate::potential::FourPotential;

    fn crit() -> CriticalStructure {
        let g = Grid3::new(9, 1.0).unwrap();
        let shape = FourPotential::spherical_well(1.0, 0.7, 0.2);
        find_critical_coupling(&shape, g, (0.5, 40.0), &CriticalOptions::default()).unwrap()
    }

    #[test]
    fn forms_symmetry_and_fd_oracle() {
        let c = crit();
        assert_eq!(c.lambda_bar, Some(0));
        let f = perturbation_forms(&c, &c.potential, 1e-6).unwrap();
        assert!(hermiticity_defect(&f.r) < 1e-6);
        assert!(anti_hermiticity_defect(&f.s) < 1e-6);
        assert!(f.q1.iter().all(|z| z.norm() < 1e-10));
        for (order, exact) in [(2, &f.r), (3, &f.s)] {
            let fd = taylor_form_fd(&c, order, 0.02).unwrap();
            let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let err = (&fd - exact).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-4 * scale, "order {order}: {err:e} vs {scale:e}");
        }
    }

    #[test]
    fn split_constants_are_consistent() {
        let c = crit();
        let sp = s_split(&c.potential, &c.basis[0], 1e-6).unwrap();
        assert!((sp.s1 - sp.s1_from_xi).norm() <= 1e-6 * sp.s1.norm());
        assert!((sp.s3 - I * sp.c3).norm() <= 1e-10 * sp.s3.norm());
        assert!(sp.c2 >= 0.0 && sp.c3 >= 0.0 && sp.c1 > 0.0);
        // the split is purely imaginary
        assert!((sp.s1 + sp.s2 + sp.s3).re.abs() < 1e-12 * sp.c1);
    }

    #[test]
    fn gamma_scales_inversely_with_b0() {
        let c = crit();
        let r = taylor_form(&c, 2).unwrap();
        let g1 = gamma_spectrum(&c, &c.potential, &r).unwrap();
        let g2 = gamma_spectrum(&c, &c.potential.scale(2.0), &r).unwrap();
        for (a, b) in g1.gammas.iter().zip(&g2.gammas) {
            assert!((a - 2.0 * b).abs() < 1e-10 * a.abs());
        }
        assert!(hermiticity_defect(&g1.mhat) < 1e-10);
        assert!(anti_hermiticity_defect(&g1.nhat) < 1e-10 || g1.nhat.iter().all(|z| z.norm() < 1e-12));
    }
}
