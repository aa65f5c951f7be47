//! Compactly supported 4-potentials `A(x) = A0 I + sum_l alpha_l A_l`, their norms,
//! the pseudo scalar product and the admissibility test for perturbations.

use crate::error::{Error, Result};
use crate::grid::{check_same, norm3, Grid3, SpinorField};
use crate::spinor::{DiracCombo, Spinor, C64, ZERO};
use std::f64::consts::PI;
use std::path::Path;

/// Radial profile of a builtin potential, or tabulated node values.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Well of radius `radius` whose edge is smoothed by a C1 cosine ramp over
    /// `radius - edge < r < radius + edge`.
    SphericalWell { radius: f64, edge: f64 },
    /// `exp(-r^2 / width^2)`, cut off smoothly between `0.8 radius` and `radius`.
    GaussianBump { width: f64, radius: f64 },
    /// Node values `[A0, A1, A2, A3]` on a fixed grid.
    Table { grid: Grid3, values: Vec<[f64; 4]> },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::SphericalWell { .. } => "spherical-well",
            Shape::GaussianBump { .. } => "gaussian-bump",
            Shape::Table { .. } => "table",
        }
    }
}

/// Smooth step equal to 1 for `t <= 0` and 0 for `t >= 1`, C1 at both ends.
fn cos_step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * t).cos())
    }
}

/// A 4-potential described analytically: `coupling * profile(x) * components`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourPotential {
    pub shape: Shape,
    pub coupling: f64,
    /// Weights of `[I, alpha_1, alpha_2, alpha_3]`; `[1, 0, 0, 0]` is purely electric.
    pub components: [f64; 4],
}

impl FourPotential {
    pub fn electric(shape: Shape, coupling: f64) -> Self {
        FourPotential {
            shape,
            coupling,
            components: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn spherical_well(coupling: f64, radius: f64, edge: f64) -> Self {
        Self::electric(Shape::SphericalWell { radius, edge }, coupling)
    }

    pub fn gaussian_bump(coupling: f64, width: f64, radius: f64) -> Self {
        Self::electric(Shape::GaussianBump { width, radius }, coupling)
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        FourPotential {
            coupling,
            ..self.clone()
        }
    }

    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            Shape::SphericalWell { radius, edge } => radius + edge,
            Shape::GaussianBump { radius, .. } => *radius,
            Shape::Table { grid, values } => values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.iter().any(|a| *a != 0.0))
                .map(|(i, _)| norm3(grid.point(i)) + 0.5 * 3f64.sqrt() * grid.spacing())
                .fold(0.0, f64::max),
        }
    }

    fn profile(&self, x: [f64; 3]) -> f64 {
        let r = norm3(x);
        match &self.shape {
            Shape::SphericalWell { radius, edge } => {
                if *edge <= 0.0 {
                    if r < *radius {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    cos_step((r - (radius - edge)) / (2.0 * edge))
                }
            }
            Shape::GaussianBump { width, radius } => {
                (-(r * r) / (width * width)).exp() * cos_step((r - 0.8 * radius) / (0.2 * radius))
            }
            Shape::Table { .. } => unreachable!("tables are sampled by node"),
        }
    }

    /// Components `[A0, A1, A2, A3]` at a point (builtin shapes only).
    pub fn value_at(&self, x: [f64; 3]) -> [f64; 4] {
        let p = self.coupling * self.profile(x);
        self.components.map(|c| c * p)
    }

    /// Sample on `grid`. The support must fit inside the grid box.
    pub fn sample(&self, grid: Grid3) -> Result<SampledPotential> {
        let values = match &self.shape {
            Shape::Table { grid: tg, values } => {
                if !tg.same_as(&grid) {
                    return Err(Error::GridMismatch(format!(
                        "table declared on n={} L={}, requested n={} L={}",
                        tg.n, tg.half_width, grid.n, grid.half_width
                    )));
                }
                values
                    .iter()
                    .map(|v| {
                        let mut out = [0.0; 4];
                        for a in 0..4 {
                            out[a] = self.coupling * self.components[a] * v[a];
                        }
                        out
                    })
                    .collect()
            }
            _ => {
                let r = self.support_radius();
                if r > grid.half_width * (1.0 + 1e-12) {
                    return Err(Error::SupportExceedsGrid(format!(
                        "support radius {r} > half width {}",
                        grid.half_width
                    )));
                }
                grid.points().map(|x| self.value_at(x)).collect()
            }
        };
        let s = SampledPotential { grid, values };
        s.validate()?;
        Ok(s)
    }
}

/// Node values of a 4-potential on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPotential {
    pub grid: Grid3,
    pub values: Vec<[f64; 4]>,
}

/// Quadrature norms of a potential, with the pointwise matrix operator norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialNorms {
    pub l1: f64,
    pub linf: f64,
    pub weighted_l1: f64,
    pub weighted_linf: f64,
}

impl SampledPotential {
    pub fn zeros(grid: Grid3) -> Self {
        SampledPotential {
            grid,
            values: vec![[0.0; 4]; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> [f64; 4]) -> Result<Self> {
        let s = SampledPotential {
            grid,
            values: grid.points().map(f).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                self.values.len(),
                self.grid.len()
            )));
        }
        if self.values.iter().flatten().any(|a| !a.is_finite()) {
            return Err(Error::NotAdmissible("non-finite potential value".into()));
        }
        Ok(())
    }

    pub fn combo(&self, i: usize) -> DiracCombo {
        let a = self.values[i];
        DiracCombo {
            s: C64::new(a[0], 0.0),
            t: ZERO,
            v: [C64::new(a[1], 0.0), C64::new(a[2], 0.0), C64::new(a[3], 0.0)],
        }
    }

    /// `A(x_i) s`.
    pub fn apply_at(&self, i: usize, s: &Spinor) -> Spinor {
        let a = self.values[i];
        if a[1] == 0.0 && a[2] == 0.0 && a[3] == 0.0 {
            return *s * a[0];
        }
        self.combo(i).apply(s)
    }

    /// Operator norm of the Hermitian matrix `A(x_i)`, i.e. `|A0| + |(A1, A2, A3)|`.
    pub fn op_norm_at(&self, i: usize) -> f64 {
        let a = self.values[i];
        a[0].abs() + (a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|a| *a == 0.0))
    }

    pub fn is_electric(&self) -> bool {
        self.values.iter().all(|v| v[1] == 0.0 && v[2] == 0.0 && v[3] == 0.0)
    }

    /// Indices of nodes where `A` is nonzero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|i| self.values[*i].iter().any(|a| *a != 0.0))
            .collect()
    }

    pub fn norms(&self) -> PotentialNorms {
        let w = self.grid.cell_volume();
        let mut n = PotentialNorms {
            l1: 0.0,
            linf: 0.0,
            weighted_l1: 0.0,
            weighted_linf: 0.0,
        };
        for i in 0..self.grid.len() {
            let a = self.op_norm_at(i);
            let wt = (1.0 + norm3(self.grid.point(i))).powi(2);
            n.l1 += a * w;
            n.weighted_l1 += a * wt * w;
            n.linf = n.linf.max(a);
            n.weighted_linf = n.weighted_linf.max(a * wt);
        }
        n
    }

    pub fn scale(&self, c: f64) -> SampledPotential {
        SampledPotential {
            grid: self.grid,
            values: self.values.iter().map(|v| v.map(|a| a * c)).collect(),
        }
    }

    pub fn add(&self, other: &SampledPotential) -> Result<SampledPotential> {
        check_same(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
            .collect();
        Ok(SampledPotential {
            grid: self.grid,
            values,
        })
    }

    /// `A f` as a field.
    pub fn apply(&self, f: &SpinorField) -> Result<SpinorField> {
        check_same(&self.grid, &f.grid)?;
        Ok(SpinorField {
            grid: f.grid,
            values: f.values.iter().enumerate().map(|(i, s)| self.apply_at(i, s)).collect(),
        })
    }

    /// Copy onto an aligned grid; fails if nonzero values would be cut off.
    pub fn resample(&self, target: Grid3) -> Result<SampledPotential> {
        if !self.grid.is_aligned(&target) {
            return Err(Error::GridMismatch("potential resample needs equal spacing".into()));
        }
        let mut out = SampledPotential::zeros(target);
        for i in self.support() {
            match target.index_of_offset(self.grid.offset(i)) {
                Some(j) => out.values[j] = self.values[i],
                None => {
                    return Err(Error::SupportExceedsGrid(
                        "potential support outside target grid".into(),
                    ))
                }
            }
        }
        Ok(out)
    }
}

/// `<f, A, g> = int f^dagger A g`.
pub fn pseudo_inner(f: &SpinorField, a: &SampledPotential, g: &SpinorField) -> Result<C64> {
    check_same(&f.grid, &a.grid)?;
    check_same(&g.grid, &a.grid)?;
    let mut acc = ZERO;
    for i in 0..a.grid.len() {
        let v = a.values[i];
        if v.iter().all(|x| *x == 0.0) {
            continue;
        }
        acc += f.values[i].dot(&a.apply_at(i, &g.values[i]));
    }
    Ok(acc * a.grid.cell_volume())
}

/// Outcome of the `W_K` admissibility test.
#[derive(Clone, Debug, PartialEq)]
pub struct WkReport {
    pub admissible: bool,
    pub worst_ratio: f64,
    /// `(label, ratio)` for each sampled element of the threshold space.
    pub ratios: Vec<(String, f64)>,
}

/// Test `||Phi||^2 (||B||_1 + ||B||_inf)^2 <= K |<Phi, B, Phi>|` on the basis and
/// on all pairwise midpoints `(Phi_p + Phi_q)`, each rescaled to unit sup norm.
///
/// A vanishing pairing gives an infinite ratio, which no `K` admits.
pub fn check_admissible_wk(b: &SampledPotential, k: f64, basis: &[SpinorField]) -> Result<WkReport> {
    if basis.is_empty() {
        return Err(Error::InvalidInput("empty threshold basis".into()));
    }
    let nb = b.norms();
    let scale = (nb.l1 + nb.linf).powi(2);
    let mut samples: Vec<(String, SpinorField)> = Vec::new();
    for (p, phi) in basis.iter().enumerate() {
        samples.push((format!("phi{p}"), phi.clone()));
    }
    for p in 0..basis.len() {
        for q in p + 1..basis.len() {
            samples.push((format!("phi{p}+phi{q}"), basis[p].add(&basis[q])?));
        }
    }
    let mut ratios = Vec::with_capacity(samples.len());
    for (label, f) in samples {
        let s = f.sup_norm();
        if s == 0.0 {
            return Err(Error::InvalidInput(format!("{label} vanishes")));
        }
        let f = f.scale(C64::new(1.0 / s, 0.0));
        let pair = pseudo_inner(&f, b, &f)?.norm();
        let ratio = if pair <= f64::MIN_POSITIVE || pair <= 1e-14 * scale.sqrt() * b.grid.cell_volume() {
            f64::INFINITY
        } else {
            scale / pair
        };
        ratios.push((label, ratio));
    }
    let worst = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(WkReport {
        admissible: worst <= k,
        worst_ratio: worst,
        ratios,
    })
}

/// Read a tabulated potential: header `ix,iy,iz,a0,a1,a2,a3`, one row per node.
pub fn read_table(path: &Path, grid: Grid3) -> Result<Shape> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut values = vec![[0.0; 4]; grid.len()];
    let mut seen = vec![false; grid.len()];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(Error::InvalidInput(format!(
                "table row has {} columns, expected 7",
                rec.len()
            )));
        }
        let parse_i = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("bad index {s}: {e}")))
        };
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad value {s}: {e}")))
        };
        let (ix, iy, iz) = (parse_i(&rec[0])?, parse_i(&rec[1])?, parse_i(&rec[2])?);
        if ix >= grid.n || iy >= grid.n || iz >= grid.n {
            return Err(Error::GridMismatch(format!(
                "node ({ix},{iy},{iz}) outside n={}",
                grid.n
            )));
        }
        let idx = grid.index(ix, iy, iz);
        values[idx] = [
            parse_f(&rec[3])?,
            parse_f(&rec[4])?,
            parse_f(&rec[5])?,
            parse_f(&rec[6])?,
        ];
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::GridMismatch(format!(
            "table misses node {:?}",
            grid.unindex(missing)
        )));
    }
    Ok(Shape::Table { grid, values })
}

pub fn write_table(path: &Path, pot: &SampledPotential) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ix", "iy", "iz", "a0", "a1", "a2", "a3"])?;
    for (i, v) in pot.values.iter().enumerate() {
        let [ix, iy, iz] = pot.grid.unindex(i);
        w.write_record([
            ix.to_string(),
            iy.to_string(),
            iz.to_string(),
            v[0].to_string(),
            v[1].to_string(),
            v[2].to_string(),
            v[3].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::new(15, 1.5).unwrap()
    }

    #[test]
    fn zero_potential_norms() {
        let n = SampledPotential::zeros(grid()).norms();
        assert_eq!(
            n,
            PotentialNorms {
                l1: 0.0,
                linf: 0.0,
                weighted_l1: 0.0,
                weighted_linf: 0.0
            }
        );
    }

    #[test]
    fn sharp_well_l1_is_ball_volume() {
        let g = Grid3::new(61, 1.2).unwrap();
        let a = FourPotential::spherical_well(2.0, 1.0, 0.0).sample(g).unwrap();
        let exact = 2.0 * 4.0 / 3.0 * PI;
        assert!((a.norms().l1 - exact).abs() / exact < 0.02);
        // smoothed edge is symmetric about R, so the volume is kept to second order
        let s = FourPotential::spherical_well(2.0, 1.0, 0.1).sample(g).unwrap();
        assert!((s.norms().l1 - exact).abs() / exact < 0.01);
    }

    #[test]
    fn gaussian_peak_at_origin() {
        let a = FourPotential::gaussian_bump(3.0, 0.5, 1.4).sample(grid()).unwrap();
        assert!((a.norms().linf - 3.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_doubles_norms() {
        let a = FourPotential::gaussian_bump(1.0, 0.5, 1.4);
        let n1 = a.sample(grid()).unwrap().norms();
        let n2 = a.with_coupling(2.0).sample(grid()).unwrap().norms();
        assert_eq!(n2.l1, 2.0 * n1.l1);
        assert_eq!(n2.linf, 2.0 * n1.linf);
    }

    #[test]
    fn support_must_fit() {
        let a = FourPotential::spherical_well(1.0, 1.4, 0.2);
        assert!(matches!(a.sample(grid()), Err(Error::SupportExceedsGrid(_))));
    }

    #[test]
    fn operator_norm_with_alpha_components() {
        let g = Grid3::new(5, 1.0).unwrap();
        let a = SampledPotential::from_fn(g, |_| [0.5, 0.3, 0.0, 0.4]).unwrap();
        // A0 + a.alpha has eigenvalues A0 +- |a|, so (A - A0)^2 = |a|^2
        let m = a.combo(0).to_matrix() - crate::spinor::Matrix4C::identity().scale(C64::new(0.5, 0.0));
        let sq = m * m;
        assert!((sq - crate::spinor::Matrix4C::identity().scale(C64::new(0.25, 0.0))).max_abs() < 1e-15);
        assert!((a.op_norm_at(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pseudo_inner_positive_for_positive_electric() {
        let g = grid();
        let a = FourPotential::gaussian_bump(1.0, 0.5, 1.4).sample(g).unwrap();
        let f = SpinorField::from_fn(g, |x| Spinor::basis(2) * C64::new(1.0 + x[0], x[1]));
        let v = pseudo_inner(&f, &a, &f).unwrap();
        assert!(v.re > 0.0 && v.im.abs() < 1e-15 * v.re);
    }

    #[test]
    fn wk_rejects_zero_pairing_and_scales() {
        let g = grid();
        let a = FourPotential::gaussian_bump(1.0, 0.5, 1.4).sample(g).unwrap();
        let phi = SpinorField::from_fn(g, |x| Spinor::basis(0) * (-x[0] * x[0]).exp());
        let r1 = check_admissible_wk(&a.scale(0.01), 1e6, std::slice::from_ref(&phi)).unwrap();
        let r2 = check_admissible_wk(&a.scale(0.02), 1e6, std::slice::from_ref(&phi)).unwrap();
        assert!((r2.worst_ratio / r1.worst_ratio - 2.0).abs() < 1e-12);
        let zero = SampledPotential::zeros(g);
        let r0 = check_admissible_wk(&zero, 1e300, &[phi]).unwrap();
        assert!(!r0.admissible && r0.worst_ratio.is_infinite());
    }

    #[test]
    fn table_roundtrip() {
        let g = Grid3::new(5, 1.0).unwrap();
        let a = FourPotential::gaussian_bump(1.5, 0.4, 0.9).sample(g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&p, &a).unwrap();
        let shape = read_table(&p, g).unwrap();
        let b = FourPotential::electric(shape, 1.0).sample(g).unwrap();
        assert_eq!(a, b);
        assert!(read_table(&p, Grid3::new(7, 1.0).unwrap()).is_err());
    }
}
