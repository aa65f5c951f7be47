//! Fixtures shared by the benchmarks.

use threshold_dirac::{FourPotential, Grid3, SampledPotential};

/// Unit-coupling spherical well of radius 1 on an `n`-node grid, edge smoothed over one cell.
pub fn unit_well(n: usize) -> SampledPotential {
    let h = 2.0 / (n as f64 - 3.0);
    let grid = Grid3::with_spacing(n, h).expect("odd grid size");
    FourPotential::spherical_well(1.0, 1.0, h)
        .sample(grid)
        .expect("well fits the grid")
}

/// The well at a coupling close to its first critical value.
pub fn near_critical_well(n: usize) -> SampledPotential {
    unit_well(n).scale(4.0)
}
