//! Cell-centred cubic lattices and spinor fields sampled on them.

use crate::error::{Error, Result};
use crate::spinor::{Spinor, C64, ZERO};

/// Cubic lattice of `n^3` cells on `[-L, L]^3`, nodes at cell centres.
///
/// `n` is odd so the origin is a node and every grid with the same spacing is a
/// sub-lattice of the same infinite lattice `h Z^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    pub n: usize,
    pub half_width: f64,
}

impl Grid3 {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n == 0 || n % 2 == 0 {
            return Err(Error::InvalidInput(format!("grid size must be odd, got {n}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid half width must be positive, got {half_width}"
            )));
        }
        Ok(Grid3 { n, half_width })
    }

    /// Grid with spacing `h` and `n` nodes per axis.
    pub fn with_spacing(n: usize, h: f64) -> Result<Self> {
        Grid3::new(n, 0.5 * n as f64 * h)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    /// Lattice coordinates relative to the origin node.
    pub fn offset(&self, idx: usize) -> [i64; 3] {
        let c = self.center() as i64;
        self.unindex(idx).map(|i| i as i64 - c)
    }

    pub fn coord1(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.spacing()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        self.unindex(idx).map(|i| self.coord1(i))
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Two grids are aligned when they share the lattice `h Z^3`.
    pub fn is_aligned(&self, other: &Grid3) -> bool {
        let (a, b) = (self.spacing(), other.spacing());
        (a - b).abs() <= 1e-12 * a.max(b)
    }

    pub fn same_as(&self, other: &Grid3) -> bool {
        self.n == other.n && self.is_aligned(other)
    }

    /// Aligned grid with `n` nodes per axis and the same spacing.
    pub fn resized(&self, n: usize) -> Result<Grid3> {
        Grid3::with_spacing(n, self.spacing())
    }

    /// Grid with half the spacing covering at least the same box.
    pub fn refined(&self) -> Grid3 {
        let n = 2 * self.n + 1;
        Grid3 {
            n,
            half_width: 0.5 * n as f64 * 0.5 * self.spacing(),
        }
    }

    /// Index in `self` of the node at lattice offset `off`, if inside.
    pub fn index_of_offset(&self, off: [i64; 3]) -> Option<usize> {
        let c = self.center() as i64;
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let i = off[a] + c;
            if i < 0 || i >= self.n as i64 {
                return None;
            }
            ijk[a] = i as usize;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }
}

pub fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Four-spinor field sampled at the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub grid: Grid3,
    pub values: Vec<Spinor>,
}

impl SpinorField {
    pub fn zeros(grid: Grid3) -> Self {
        SpinorField {
            grid,
            values: vec![Spinor::ZERO; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> Spinor) -> Self {
        SpinorField {
            grid,
            values: grid.points().map(f).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, s| m.max(s.norm()))
    }

    /// `sup (1 + |x|)^(-m) |f(x)|`.
    pub fn weighted_sup_norm(&self, m: i32) -> f64 {
        self.values.iter().enumerate().fold(0.0, |acc, (i, s)| {
            acc.max(s.norm() * (1.0 + norm3(self.grid.point(i))).powi(-m))
        })
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// `int f^dagger g`.
    pub fn inner(&self, other: &SpinorField) -> Result<C64> {
        check_same(&self.grid, &other.grid)?;
        let w = self.grid.cell_volume();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(ZERO, |acc, (a, b)| acc + a.dot(b))
            * w)
    }

    pub fn scale(&self, c: C64) -> SpinorField {
        SpinorField {
            grid: self.grid,
            values: self.values.iter().map(|s| *s * c).collect(),
        }
    }

    pub fn axpy(&mut self, a: C64, x: &SpinorField) -> Result<()> {
        check_same(&self.grid, &x.grid)?;
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += *xv * a;
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpinorField) -> Result<SpinorField> {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn add(&self, other: &SpinorField) -> Result<SpinorField> {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    /// Copy onto an aligned grid, zero-filling nodes that are not covered.
    pub fn resample(&self, target: Grid3) -> Result<SpinorField> {
        if !self.grid.is_aligned(&target) {
            return Err(Error::GridMismatch(format!(
                "spacing {} vs {}",
                self.grid.spacing(),
                target.spacing()
            )));
        }
        let mut out = SpinorField::zeros(target);
        for (i, v) in out.values.iter_mut().enumerate() {
            if let Some(j) = self.grid.index_of_offset(target.offset(i)) {
                *v = self.values[j];
            }
        }
        Ok(out)
    }

    /// Largest `|f|` over nodes with `r0 <= |x| < r1`.
    pub fn shell_sup(&self, r0: f64, r1: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let r = norm3(self.grid.point(*i));
                r >= r0 && r < r1
            })
            .fold(0.0, |m, (_, s)| m.max(s.norm()))
    }
}

pub(crate) fn check_same(a: &Grid3, b: &Grid3) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "n={} h={} vs n={} h={}",
            a.n,
            a.spacing(),
            b.n,
            b.spacing()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_node_and_weights_cover_box() {
        let g = Grid3::new(13, 1.3).unwrap();
        let c = g.center();
        assert_eq!(g.point(g.index(c, c, c)), [0.0, 0.0, 0.0]);
        let vol = g.cell_volume() * g.len() as f64;
        assert!((vol - 2.6f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn even_size_rejected() {
        assert!(Grid3::new(12, 1.0).is_err());
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = Grid3::new(11, 1.1).unwrap();
        let r = g.refined();
        assert!((r.spacing() - 0.5 * g.spacing()).abs() < 1e-15);
        assert!(r.half_width >= g.half_width);
        assert_eq!(r.n % 2, 1);
    }

    #[test]
    fn resample_roundtrip() {
        let g = Grid3::new(5, 1.0).unwrap();
        let f = SpinorField::from_fn(g, |x| Spinor::basis(0) * (x[0] + 2.0 * x[1] - x[2]));
        let big = f.resample(g.resized(9).unwrap()).unwrap();
        let back = big.resample(g).unwrap();
        assert_eq!(back, f);
        assert!(f.resample(Grid3::new(5, 1.1).unwrap()).is_err());
    }
}
