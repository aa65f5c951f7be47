//! Parameter sweeps near a critical potential: resonance peaks, bound-state lines,
//! inverse-operator bounds and k-derivatives of generalized eigenfunctions.

use crate::criticality::{CriticalStructure, Projectors};
use crate::error::{Error, Result};
use crate::forms::GammaSpectrum;
use crate::green::Momentum;
use crate::grid::{Grid3, SpinorField};
use crate::ls_solver::{
    assemble_dt, assemble_t, free_solution, free_solution_dk, solve_generalized, solve_shifted, SolverMode,
    SolverSettings,
};
use crate::potential::SampledPotential;
use crate::spinor::{C64, ONE};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "THRESHOLD_DIRAC_THREADS";

/// Thread pool sized by `THRESHOLD_DIRAC_THREADS` (default: all cores).
/// Dense solves keep at most two cells in flight.
pub fn worker_pool(settings: &SolverSettings) -> Result<rayon::ThreadPool> {
    let mut n = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if settings.mode == SolverMode::Dense {
        n = if n == 0 { 2 } else { n.min(2) };
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

/// Shared inputs of all probes around one critical potential `A`.
pub struct ProbeContext<'a> {
    pub crit: &'a CriticalStructure,
    pub spectrum: &'a GammaSpectrum,
    /// Perturbation shape; the potential of a cell is `A + mu B0`.
    pub b0: &'a SampledPotential,
    pub settings: SolverSettings,
    pub eval: Grid3,
    pub projectors: Projectors,
    /// Direction of the incoming momentum.
    pub direction: [f64; 3],
}

impl<'a> ProbeContext<'a> {
    pub fn new(
        crit: &'a CriticalStructure,
        spectrum: &'a GammaSpectrum,
        b0: &'a SampledPotential,
        settings: SolverSettings,
    ) -> Result<Self> {
        let eval = settings.eval_grid(crit.grid())?;
        let projectors = crit.projectors_on(eval)?;
        Ok(ProbeContext {
            crit,
            spectrum,
            b0,
            settings,
            eval,
            projectors,
            direction: [0.0, 0.0, 1.0],
        })
    }

    pub fn perturbation(&self, mu: f64) -> SampledPotential {
        self.b0.scale(mu)
    }

    /// `inf_{|Psi| = 1} |(mu B0hat + k^2 Rhat) Psi| + k^3` on the threshold space.
    pub fn denominator(&self, mu: f64, k: f64) -> f64 {
        let m = &self.spectrum.b0hat * C64::new(mu, 0.0) + &self.spectrum.rhat * C64::new(k * k, 0.0);
        smallest_singular_value(&m) + k * k * k
    }

    /// `Ck sum_l (|mu + gamma_l k^2| + k^3)^{-1}` with `C = 1`.
    pub fn resonance_profile(&self, mu: f64, k: f64) -> f64 {
        self.spectrum
            .gammas
            .iter()
            .map(|g| k / ((mu + g * k * k).abs() + k * k * k))
            .sum()
    }

    fn kvec(&self, k: f64) -> [f64; 3] {
        self.direction.map(|d| d * k)
    }
}

fn smallest_singular_value(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().min()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub mus: Vec<f64>,
    pub ks: Vec<f64>,
    pub js: Vec<usize>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.mus.is_empty() || self.ks.is_empty() || self.js.is_empty() {
            return Err(Error::InvalidInput("sweep needs nonempty mu, k and j lists".into()));
        }
        if self.ks.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::InvalidInput("sweep momenta must be positive".into()));
        }
        if self.js.iter().any(|j| !(1..=2).contains(j)) {
            return Err(Error::InvalidInput("spin labels must be 1 or 2".into()));
        }
        Ok(())
    }

    /// Cells in plan order: `mu` outermost, then `k`, then `j`.
    pub fn cells(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &mu in &self.mus {
            for &k in &self.ks {
                for &j in &self.js {
                    out.push((mu, k, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub mu: f64,
    pub k: f64,
    pub j: usize,
    pub sup_norm: f64,
    /// `||P_N^par phi||_inf`.
    pub n_part_norm: f64,
    /// `||P_N^par phi||_2` on the evaluation grid.
    pub n_part_l2: f64,
    /// `||phi - P_N^par phi - chi||_inf`.
    pub residual_part: f64,
    /// `C k sum_l (|mu + gamma_l k^2| + k^3)^{-1}` with the fitted `C`.
    pub predicted_bound: f64,
    pub at_resonance: bool,
}

impl SweepRecord {
    pub const HEADER: [&'static str; 10] = [
        "mu",
        "k",
        "j",
        "sup_norm",
        "n_part_norm",
        "n_part_l2",
        "residual_part",
        "predicted_bound",
        "at_resonance",
        "profile",
    ];
}

/// Records of a sweep and the fitted constant of the resonance profile.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub fitted_c: f64,
}

/// Solve one cell and split the solution along `N`.
pub fn sweep_cell(ctx: &ProbeContext, mu: f64, k: f64, j: usize) -> SweepRecord {
    let flagged = SweepRecord {
        mu,
        k,
        j,
        sup_norm: f64::NAN,
        n_part_norm: f64::NAN,
        n_part_l2: f64::NAN,
        residual_part: f64::NAN,
        predicted_bound: f64::NAN,
        at_resonance: true,
    };
    let run = || -> Result<SweepRecord> {
        let sol = solve_generalized(
            &ctx.crit.potential,
            &ctx.perturbation(mu),
            j,
            ctx.kvec(k),
            &ctx.settings,
        )?;
        let par = ctx
            .projectors
            .project(crate::criticality::Split::NParallel, &sol.phi_eval)?;
        let rest = sol.phi_eval.sub(&par)?.sub(&sol.chi_eval)?;
        Ok(SweepRecord {
            mu,
            k,
            j,
            sup_norm: sol.diagnostics.sup_norm,
            n_part_norm: par.sup_norm(),
            n_part_l2: par.l2_norm(),
            residual_part: rest.sup_norm(),
            predicted_bound: f64::NAN,
            at_resonance: sol.diagnostics.at_resonance,
        })
    };
    run().unwrap_or(flagged)
}

/// Least-squares fit of `log y = log C + log x` over usable pairs.
pub fn fit_log_constant(pairs: &[(f64, f64)]) -> f64 {
    let logs: Vec<f64> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (y / x).ln())
        .collect();
    if logs.is_empty() {
        return f64::NAN;
    }
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Slope of a least-squares line through the origin.
pub fn slope_through_origin(pairs: &[(f64, f64)]) -> f64 {
    let sxy: f64 = pairs.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| x * x).sum();
    sxy / sxx
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Run every cell of the plan; cells run concurrently and are collected in plan order.
pub fn resonance_sweep(ctx: &ProbeContext, plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let cells = plan.cells();
    let pool = worker_pool(&ctx.settings)?;
    let mut records: Vec<SweepRecord> =
        pool.install(|| cells.par_iter().map(|&(mu, k, j)| sweep_cell(ctx, mu, k, j)).collect());
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.at_resonance)
        .map(|r| (ctx.resonance_profile(r.mu, r.k), r.sup_norm))
        .collect();
    let c = fit_log_constant(&pairs);
    for r in &mut records {
        r.predicted_bound = c * ctx.resonance_profile(r.mu, r.k);
    }
    Ok(SweepResult { records, fitted_c: c })
}

/// Location of the resonance peak of `mu -> ||phi||_inf` at fixed `k`.
#[derive(Clone, Debug)]
pub struct PeakReport {
    pub k: f64,
    pub mu_peak: f64,
    pub sup_at_peak: f64,
    /// `-gamma_1 k^2`.
    pub mu_predicted: f64,
    pub scan: Vec<SweepRecord>,
}

/// Coarse scan over `mus`, then golden-section maximisation between the
/// neighbours of the coarse maximum.
pub fn resonance_peak(ctx: &ProbeContext, k: f64, j: usize, mus: &[f64], golden_iters: usize) -> Result<PeakReport> {
    if mus.len() < 3 {
        return Err(Error::InvalidInput("peak scan needs at least three mu values".into()));
    }
    let plan = SweepPlan {
        mus: mus.to_vec(),
        ks: vec![k],
        js: vec![j],
    };
    let scan = resonance_sweep(ctx, &plan)?.records;
    let value = |r: &SweepRecord| {
        if r.sup_norm.is_finite() {
            r.sup_norm
        } else {
            f64::INFINITY
        }
    };
    let best = (0..scan.len())
        .max_by(|a, b| value(&scan[*a]).total_cmp(&value(&scan[*b])))
        .unwrap_or(0);
    let mut a = mus[best.saturating_sub(1)];
    let mut b = mus[(best + 1).min(mus.len() - 1)];
    let f = |mu: f64| {
        let r = sweep_cell(ctx, mu, k, j);
        if r.sup_norm.is_finite() {
            r.sup_norm
        } else {
            f64::INFINITY
        }
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..golden_iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let (mu_peak, sup_at_peak) = if fc > fd { (c, fc) } else { (d, fd) };
    let gamma1 = ctx.spectrum.gammas.first().cloned().unwrap_or(f64::NAN);
    Ok(PeakReport {
        k,
        mu_peak,
        sup_at_peak,
        mu_predicted: -gamma1 * k * k,
        scan,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundStateRecord {
    pub mu: f64,
    pub kappa: f64,
    pub kappa_sq: f64,
    pub energy: f64,
    pub sigma_min: f64,
    /// The critical state itself at `kappa = 0`.
    pub boundary: bool,
}

impl BoundStateRecord {
    pub const HEADER: [&'static str; 6] = ["mu", "kappa", "kappa_sq", "energy", "sigma_min", "boundary"];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaScan {
    pub points: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Regula falsi steps on `nu(kappa) - 1` between the neighbours of a minimum.
    pub refine_iters: usize,
    /// Accept a minimum when `sigma_min < accept_tol * ||M||`.
    pub accept_tol: f64,
}

impl Default for KappaScan {
    fn default() -> Self {
        KappaScan {
            points: 32,
            kappa_min: 1e-3,
            kappa_max: 0.9,
            refine_iters: 16,
            accept_tol: 1e-6,
        }
    }
}

/// `sigma_min(1 - T^{A + mu B0}_{E}) ` at `k = i kappa`.
pub fn sigma_at_kappa(
    total: &SampledPotential,
    kappa: f64,
    settings: &SolverSettings,
    warm: Option<&[C64]>,
) -> Result<(f64, Vec<C64>)> {
    let op = assemble_t(total, Momentum::imaginary(kappa)?);
    Ok(crate::criticality::sigma_min(&op, 1.0, settings, warm))
}

/// Bound states of `A + mu B0` below the threshold for each `mu`.
pub fn boundstate_track(ctx: &ProbeContext, mus: &[f64], scan: &KappaScan) -> Result<Vec<BoundStateRecord>> {
    let pool = worker_pool(&ctx.settings)?;
    let per_mu: Vec<Result<Vec<BoundStateRecord>>> =
        pool.install(|| mus.par_iter().map(|&mu| boundstates_for(ctx, mu, scan)).collect());
    let mut out = Vec::new();
    for r in per_mu {
        out.extend(r?);
    }
    Ok(out)
}

fn boundstates_for(ctx: &ProbeContext, mu: f64, scan: &KappaScan) -> Result<Vec<BoundStateRecord>> {
    if mu == 0.0 {
        return Ok(vec![BoundStateRecord {
            mu,
            kappa: 0.0,
            kappa_sq: 0.0,
            energy: 1.0,
            sigma_min: ctx.crit.singular_values.first().cloned().unwrap_or(0.0),
            boundary: true,
        }]);
    }
    let total = ctx.crit.potential.add(&ctx.perturbation(mu))?;
    let mut capped = ctx.settings;
    capped.gmres.max_iter = capped.gmres.max_iter.min(300);
    let n = scan.points.max(3);
    let ratio = (scan.kappa_max / scan.kappa_min).powf(1.0 / (n - 1) as f64);
    let kappas: Vec<f64> = (0..n).map(|i| scan.kappa_min * ratio.powi(i as i32)).collect();
    let mut sig = Vec::with_capacity(n);
    let mut warm: Option<Vec<C64>> = None;
    for &kap in &kappas {
        let (s, v) = sigma_at_kappa(&total, kap, &capped, warm.as_deref())?;
        sig.push(s);
        warm = Some(v);
    }
    let op0 = assemble_t(&total, Momentum::imaginary(kappas[0])?);
    let sys = crate::ls_solver::shifted_system(&op0, ONE, &capped);
    let mnorm = crate::criticality::matrix_norm(sys.as_ref(), 8).max(1.0);
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(sig[i] < sig[i - 1] && sig[i] <= sig[i + 1]) {
            continue;
        }
        // the eigenvalue of T nearest 1 crosses 1 at a bound state; Illinois on nu - 1
        let mut w = warm.clone();
        let mut eval = |kap: f64| -> Result<(f64, f64)> {
            let op = assemble_t(&total, Momentum::imaginary(kap)?);
            let (s, v) = crate::criticality::sigma_min(&op, 1.0, &capped, w.as_deref());
            let nu = crate::criticality::rayleigh_quotient(&op, &v);
            w = Some(v);
            Ok((nu.re - 1.0, s))
        };
        let (mut a, mut b) = (kappas[i - 1], kappas[i + 1]);
        let (mut fa, _) = eval(a)?;
        let (mut fb, _) = eval(b)?;
        if fa * fb > 0.0 {
            continue;
        }
        let (mut t, mut s) = (a, f64::INFINITY);
        let mut side = 0;
        for _ in 0..scan.refine_iters {
            t = (a * fb - b * fa) / (fb - fa);
            let (ft, st) = eval(t)?;
            s = st;
            if ft == 0.0 || (b - a).abs() < 1e-12 * t {
                break;
            }
            if ft * fb < 0.0 {
                a = b;
                fa = fb;
                side = 0;
            } else {
                fa = if side == -1 { 0.5 * fa } else { fa };
                side = -1;
            }
            b = t;
            fb = ft;
        }
        if s < scan.accept_tol * mnorm {
            let kappa = t;
            out.push(BoundStateRecord {
                mu,
                kappa,
                kappa_sq: kappa * kappa,
                energy: (1.0 - kappa * kappa).sqrt(),
                sigma_min: s,
                boundary: false,
            });
        }
    }
    Ok(out)
}

/// Norms of the inverse-operator probes at one `(mu, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseProbe {
    pub mu: f64,
    pub k: f64,
    /// `||P_N^par (1 - T)^{-1} A Phi||_inf`.
    pub par_of_a_phi: f64,
    /// `||P_N^perp (1 - T)^{-1} A Phi||_inf`.
    pub perp_of_a_phi: f64,
    /// `||P_N^par (1 - T)^{-1} m_perp||_inf`.
    pub par_of_m_perp: f64,
    /// `||P_N^perp (1 - T)^{-1} m_perp||_inf`.
    pub perp_of_m_perp: f64,
    /// `inf |(mu B0hat + k^2 Rhat) Psi| + k^3`.
    pub denominator: f64,
    pub at_resonance: bool,
}

impl InverseProbe {
    pub const HEADER: [&'static str; 8] = [
        "mu",
        "k",
        "par_of_a_phi",
        "perp_of_a_phi",
        "par_of_m_perp",
        "perp_of_m_perp",
        "denominator",
        "at_resonance",
    ];
}

/// A fixed element of `M^perp` on the evaluation grid: the `M`-perpendicular part of
/// a smooth spinor bump supported near the potential.
pub fn reference_m_perp(ctx: &ProbeContext) -> Result<SpinorField> {
    let r = ctx.crit.grid().half_width;
    let f = SpinorField::from_fn(ctx.eval, |x| {
        let rr = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (r * r);
        let env = if rr < 1.0 { (1.0 - rr).powi(2) } else { 0.0 };
        crate::spinor::Spinor([
            C64::new(env, 0.0),
            C64::new(0.5 * env * x[0] / r, 0.0),
            C64::new(0.0, 0.3 * env),
            C64::new(0.2 * env * x[2] / r, 0.0),
        ])
    });
    ctx.projectors.project(crate::criticality::Split::MPerp, &f)
}

/// Solve `(1 - T^{A + mu B0}_{E_k}) u = A Phi` and `(1 - T) v = m_perp` and split both along `N`.
pub fn inverse_bound_probe(
    ctx: &ProbeContext,
    mu: f64,
    k: f64,
    basis_index: usize,
    m_perp: &SpinorField,
) -> Result<InverseProbe> {
    let phi = ctx
        .crit
        .basis
        .get(basis_index)
        .ok_or_else(|| Error::InvalidInput(format!("basis index {basis_index} out of range")))?;
    let total = ctx.crit.potential.add(&ctx.perturbation(mu))?;
    let op = assemble_t(&total, Momentum::real(k));
    let box_grid = ctx.crit.grid();
    let a_phi = ctx.crit.potential.apply(phi)?;
    let a_phi_eval = a_phi.resample(ctx.eval)?;
    let m_box = m_perp.resample(box_grid)?;
    let u = solve_shifted(&op, ONE, &a_phi, &a_phi_eval, &ctx.settings, None)?;
    let v = solve_shifted(&op, ONE, &m_box, m_perp, &ctx.settings, None)?;
    let split = |f: &SpinorField| -> Result<(f64, f64)> {
        let par = ctx.projectors.project(crate::criticality::Split::NParallel, f)?;
        let perp = f.sub(&par)?;
        Ok((par.sup_norm(), perp.sup_norm()))
    };
    let (pu, qu) = split(&u.phi_eval)?;
    let (pv, qv) = split(&v.phi_eval)?;
    Ok(InverseProbe {
        mu,
        k,
        par_of_a_phi: pu,
        perp_of_a_phi: qu,
        par_of_m_perp: pv,
        perp_of_m_perp: qv,
        denominator: ctx.denominator(mu, k),
        at_resonance: u.diagnostics.at_resonance || v.diagnostics.at_resonance,
    })
}

/// Inverse probes over a `(mu, k)` grid, in `mu`-major order.
pub fn inverse_probe_grid(ctx: &ProbeContext, mus: &[f64], ks: &[f64]) -> Result<Vec<InverseProbe>> {
    let m_perp = reference_m_perp(ctx)?;
    let cells: Vec<(f64, f64)> = mus.iter().flat_map(|&mu| ks.iter().map(move |&k| (mu, k))).collect();
    let pool = worker_pool(&ctx.settings)?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(mu, k)| inverse_bound_probe(ctx, mu, k, 0, &m_perp))
            .collect()
    })
}

/// `k`-derivatives of a generalized eigenfunction by the derivative recursion.
#[derive(Clone, Debug)]
pub struct DerivativeBound {
    pub mu: f64,
    pub k: f64,
    pub j: usize,
    /// `1 + (k + ||B||_1) / (inf |(P_N^par B + Rhat k^2) Psi| + k^3)`.
    pub alpha: f64,
    /// `||(1 + |x|)^{-m} d^m phi / dk^m||_inf` for `m = 0, 1, ...`.
    pub weighted_norms: Vec<f64>,
    /// `phi^{(m)}` on the evaluation grid.
    pub derivatives: Vec<SpinorField>,
    pub at_resonance: bool,
}

impl DerivativeBound {
    pub const HEADER: [&'static str; 7] = ["mu", "k", "j", "alpha", "weighted_m1", "weighted_m2", "at_resonance"];
}

const BINOMIAL: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]];

/// `phi^{(m)}` for `m` up to `order` (1 or 2) from
/// `(1 - T) phi^{(m)} = d^m chi + sum_{l=1}^{m} C(m, l) d^l T phi^{(m-l)}`.
pub fn derivative_recursion(ctx: &ProbeContext, mu: f64, j: usize, k: f64, order: usize) -> Result<DerivativeBound> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidInput(format!("derivative order {order} not in 1..=2")));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidInput("derivative recursion needs k > 0".into()));
    }
    let b = ctx.perturbation(mu);
    let total = ctx.crit.potential.add(&b)?;
    let box_grid = ctx.crit.grid();
    let mom = Momentum::real(k);
    let ops: Vec<_> = (0..=order).map(|l| assemble_dt(&total, mom, l)).collect();
    let mut phi_box: Vec<SpinorField> = Vec::new();
    let mut phi_eval: Vec<SpinorField> = Vec::new();
    let mut at_resonance = false;
    for m in 0..=order {
        let mut rhs_box = free_solution_dk(box_grid, j, ctx.direction, k, m)?;
        let mut rhs_eval = free_solution_dk(ctx.eval, j, ctx.direction, k, m)?;
        for l in 1..=m {
            let c = C64::new(BINOMIAL[m][l], 0.0);
            rhs_box.axpy(c, &ops[l].apply_field(&phi_box[m - l])?)?;
            rhs_eval.axpy(c, &ops[l].apply_to(&phi_box[m - l], ctx.eval)?)?;
        }
        let sol = solve_shifted(&ops[0], ONE, &rhs_box, &rhs_eval, &ctx.settings, None)?;
        at_resonance |= sol.diagnostics.at_resonance;
        phi_box.push(sol.phi_box);
        phi_eval.push(sol.phi_eval);
    }
    let weighted_norms = phi_eval
        .iter()
        .enumerate()
        .map(|(m, f)| f.weighted_sup_norm(m as i32))
        .collect();
    let l1 = b.norms().l1;
    let alpha = 1.0 + (k + l1) / ctx.denominator(mu, k);
    Ok(DerivativeBound {
        mu,
        k,
        j,
        alpha,
        weighted_norms,
        derivatives: phi_eval,
        at_resonance,
    })
}

/// Weighted relative error of `phi^{(1)}` against the central difference of the
/// solution in `k` with step `step`.
pub fn derivative_fd_error(ctx: &ProbeContext, mu: f64, j: usize, k: f64, step: f64) -> Result<f64> {
    let d = derivative_recursion(ctx, mu, j, k, 1)?;
    let b = ctx.perturbation(mu);
    let plus = solve_generalized(&ctx.crit.potential, &b, j, ctx.kvec(k + step), &ctx.settings)?;
    let minus = solve_generalized(&ctx.crit.potential, &b, j, ctx.kvec(k - step), &ctx.settings)?;
    let fd = plus.phi_eval.sub(&minus.phi_eval)?.scale(C64::new(0.5 / step, 0.0));
    let err = fd.sub(&d.derivatives[1])?.weighted_sup_norm(1);
    Ok(err / d.derivatives[1].weighted_sup_norm(1))
}

/// One record of the `lambda = 1` probe.
#[derive(Clone, Debug, PartialEq)]
pub struct Lambda1Record {
    pub mu: f64,
    pub k: f64,
    pub sup_norm: f64,
    pub n_part_norm: f64,
    pub residual_part: f64,
    /// `inf |<Psi, B, Psi>| + k` over unit `Psi` in `N`.
    pub denominator: f64,
    pub at_resonance: bool,
}

impl Lambda1Record {
    pub const HEADER: [&'static str; 7] = [
        "mu",
        "k",
        "sup_norm",
        "n_part_norm",
        "residual_part",
        "denominator",
        "at_resonance",
    ];
}

/// Sweep for a critical potential whose threshold states are resonances.
pub fn lambda1_probe(ctx: &ProbeContext, mus: &[f64], ks: &[f64]) -> Result<Vec<Lambda1Record>> {
    if ctx.crit.lambda_bar != Some(1) {
        return Err(Error::InvalidInput(
            "lambda1 probe needs a critical potential with lambda_bar = 1".into(),
        ));
    }
    let plan = SweepPlan {
        mus: mus.to_vec(),
        ks: ks.to_vec(),
        js: vec![1],
    };
    let res = resonance_sweep(ctx, &plan)?;
    Ok(res
        .records
        .into_iter()
        .map(|r| {
            let b = &ctx.spectrum.b0hat * C64::new(r.mu, 0.0);
            Lambda1Record {
                mu: r.mu,
                k: r.k,
                sup_norm: r.sup_norm,
                n_part_norm: r.n_part_norm,
                residual_part: r.residual_part,
                denominator: smallest_singular_value(&b) + r.k,
                at_resonance: r.at_resonance,
            }
        })
        .collect())
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lo * r.powi(i as i32)).collect()
}

/// Equally spaced values from `lo` to `hi` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Free generalized eigenfunction on an aligned grid (the `A = 0` reference).
pub fn free_reference(grid: Grid3, j: usize, kvec: [f64; 3]) -> Result<SpinorField> {
    free_solution(grid, j, kvec)
}
