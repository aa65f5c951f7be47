//! Lippmann-Schwinger solver for the three-dimensional Dirac operator with
//! compactly supported 4-potentials, and probes of the behaviour of generalized
//! eigenfunctions near the threshold `E = 1`.
//!
//! Units are natural (`c = m = hbar = 1`); `E_k = sqrt(k^2 + 1)`.

pub mod config;
pub mod criticality;
pub mod error;
pub mod forms;
pub mod green;
pub mod grid;
pub mod kernel;
pub mod krylov;
pub mod ls_solver;
pub mod output;
pub mod potential;
pub mod probes;
pub mod radial;
pub mod spinor;

pub use config::LabConfig;
pub use criticality::{
    classify_lambda_bar, decay_decomposition, find_critical_coupling, find_critical_sampled, CriticalOptions,
    CriticalStructure, Projectors, Split,
};
pub use error::{Error, Result};
pub use forms::{gamma_spectrum, perturbation_forms, GammaSpectrum, PerturbationForms};
pub use green::{energy, green, green_dk, KernelEval, Momentum};
pub use grid::{Grid3, SpinorField};
pub use ls_solver::{
    assemble_dt, assemble_t, free_solution, solve_generalized, symmetry_probe, GeneralizedSolution, IntegralOperator,
    SolverMode, SolverSettings,
};
pub use potential::{check_admissible_wk, pseudo_inner, FourPotential, PotentialNorms, SampledPotential, Shape};
pub use probes::{
    boundstate_track, derivative_recursion, inverse_bound_probe, lambda1_probe, resonance_sweep, BoundStateRecord,
    DerivativeBound, InverseProbe, ProbeContext, SweepPlan, SweepRecord,
};
pub use radial::{threshold_condition, RadialWell, ThresholdRoot};
pub use spinor::{alpha, beta, free_dirac_symbol, Matrix4C, Spinor, C64};
