use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use threshold_dirac::config::{LabConfig, ShapeSpec};
use threshold_dirac::criticality::{
    classify_lambda_bar, decay_decomposition, decay_grid, find_critical_sampled, CriticalStructure,
};
use threshold_dirac::forms::perturbation_forms;
use threshold_dirac::green::kernel_fd_error;
use threshold_dirac::output::{num, write_csv, write_csv_file, write_dat, write_field_with_meta};
use threshold_dirac::probes::{
    boundstate_track, derivative_fd_error, derivative_recursion, inverse_probe_grid, resonance_peak, resonance_sweep,
    slope_through_origin, BoundStateRecord, DerivativeBound, InverseProbe, ProbeContext, SweepRecord,
};
use threshold_dirac::radial::{threshold_condition, RadialWell};
use threshold_dirac::{solve_generalized, Momentum, SampledPotential, C64};

#[derive(Parser)]
#[command(
    name = "threshold-dirac",
    version,
    about = "Threshold behaviour of the 3D Dirac Lippmann-Schwinger equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file with [grid], [potential], [solver], ... sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<LabConfig> {
        match &self.config {
            Some(p) => LabConfig::from_file(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(LabConfig::parse("", Path::new("."))?),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference verification of the kernel derivatives.
    KernelCheck {
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Solve the Lippmann-Schwinger equation for the configured potential.
    Solve {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long, default_value_t = 0.0)]
        kx: f64,
        #[arg(long, default_value_t = 0.0)]
        ky: f64,
        #[arg(long, default_value_t = 0.1)]
        kz: f64,
        /// Field CSV dump (a `.meta` sidecar is written next to it).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate the critical coupling and its threshold space.
    FindCritical {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Override the configured shape: well or gaussian.
        #[arg(long)]
        shape: Option<String>,
        /// Coupling bracket `lo,hi`.
        #[arg(long, value_delimiter = ',')]
        bracket: Option<Vec<f64>>,
        /// Directory for the basis field dumps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// lambda values, lambda_bar and decay exponents of the threshold space.
    Classify {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Taylor forms, gamma spectrum and the constants C1..C3.
    Forms {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Resonance sweep over the (mu, k, j) plan.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArg,
        /// File whose [sweep] section replaces the configured plan.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also locate the resonance peak in mu at the configured peak momentum.
        #[arg(long)]
        peak: bool,
    },
    /// Bound-state crossings below the threshold.
    Boundstates {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-derivatives of generalized eigenfunctions.
    Derivatives {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Finite-difference step for the first-derivative check; 0 disables it.
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,
    },
    /// Norms of (1 - T)^{-1} applied to A Phi and to an element of M-perp.
    InverseProbe {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Critical couplings on several grids against the radial shooting oracle.
    OracleCompare {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Grid sizes, one per refinement level.
        #[arg(long, value_delimiter = ',', default_value = "13,17,21")]
        levels: Vec<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn stdout_csv(header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_csv(std::io::stdout().lock(), header, rows)?;
    Ok(())
}

/// A `# name` line followed by a CSV block and a blank line.
fn stdout_block(name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "# {name}")?;
    write_csv(&mut out, header, rows)?;
    writeln!(out)?;
    Ok(())
}

fn emit(out: Option<&Path>, stem: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv_file(&dir.join(format!("{stem}.csv")), header, rows)?;
        write_dat(&dir.join(format!("{stem}.dat")), header, rows)?;
    }
    stdout_csv(header, rows)
}

fn critical(cfg: &LabConfig) -> Result<CriticalStructure> {
    let unit = cfg.unit_potential()?;
    Ok(find_critical_sampled(
        &unit,
        cfg.potential.bracket,
        &cfg.critical_options(),
    )?)
}

fn shape_name(cfg: &LabConfig) -> &'static str {
    match cfg.potential.shape {
        ShapeSpec::Well { .. } => "spherical-well",
        ShapeSpec::Gaussian { .. } => "gaussian-bump",
        ShapeSpec::Table { .. } => "table",
    }
}

fn cplx(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::KernelCheck { points, step } => kernel_check(points, step),
        Command::Solve {
            cfg,
            j,
            kx,
            ky,
            kz,
            out,
        } => {
            let cfg = cfg.load()?;
            let grid = cfg.grid()?;
            let a = cfg.potential()?.sample(grid)?;
            let sol = solve_generalized(&a, &SampledPotential::zeros(grid), j, [kx, ky, kz], &cfg.solver)?;
            if let Some(p) = &out {
                let k = (kx * kx + ky * ky + kz * kz).sqrt();
                let extra = [("j", j.to_string()), ("k", num(k))];
                write_field_with_meta(p, &sol.phi_eval, shape_name(&cfg), cfg.potential.coupling, &extra)?;
            }
            let d = &sol.diagnostics;
            stdout_csv(
                &[
                    "sup_norm",
                    "residual",
                    "condition_estimate",
                    "at_resonance",
                    "iterations",
                ],
                &[vec![
                    num(d.sup_norm),
                    num(d.residual),
                    num(d.condition_estimate),
                    d.at_resonance.to_string(),
                    d.iterations.to_string(),
                ]],
            )
        }
        Command::FindCritical {
            cfg,
            shape,
            bracket,
            out,
        } => {
            let mut cfg = cfg.load()?;
            if let Some(s) = shape {
                let radius = match cfg.potential.shape {
                    ShapeSpec::Well { radius, .. } | ShapeSpec::Gaussian { radius, .. } => radius,
                    ShapeSpec::Table { .. } => 1.0,
                };
                cfg.potential.shape = match s.as_str() {
                    "well" => ShapeSpec::Well { radius, edge: None },
                    "gaussian" => ShapeSpec::Gaussian {
                        width: 0.5 * radius,
                        radius,
                    },
                    other => bail!("unknown shape '{other}'"),
                };
            }
            if let Some(b) = bracket {
                if b.len() != 2 {
                    bail!("--bracket expects two values lo,hi");
                }
                cfg.potential.bracket = (b[0], b[1]);
            }
            let crit = critical(&cfg)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                for (p, phi) in crit.basis.iter().enumerate() {
                    let path = dir.join(format!("basis_{p}.csv"));
                    write_field_with_meta(&path, phi, shape_name(&cfg), crit.coupling, &[("index", p.to_string())])?;
                }
            }
            let rows: Vec<Vec<String>> = (0..crit.dim())
                .map(|p| {
                    vec![
                        num(crit.coupling),
                        crit.dim().to_string(),
                        p.to_string(),
                        num(crit.singular_values[p]),
                        num(crit.residuals[p]),
                        num(crit.matrix_norm),
                    ]
                })
                .collect();
            stdout_csv(&["coupling", "dim", "index", "sigma", "residual", "matrix_norm"], &rows)
        }
        Command::Classify { cfg } => {
            let cfg = cfg.load()?;
            let crit = critical(&cfg)?;
            let verdict = classify_lambda_bar(&crit, cfg.tolerances.lambda)?;
            let fields = crit.basis_on(decay_grid(&crit.potential, 16)?)?;
            let mut rows = Vec::new();
            for (p, phi) in fields.iter().enumerate() {
                let rep = decay_decomposition(phi, &crit.potential, cfg.tolerances.lambda)?;
                let opt = |v: Option<f64>| v.map(num).unwrap_or_else(|| "nan".into());
                let by_decay = match rep.exponent_phi {
                    Some(e) if e <= -1.8 => "0",
                    Some(_) => "1",
                    None => "undetermined",
                };
                rows.push(vec![
                    p.to_string(),
                    num(crit.lambda_values[p].norm()),
                    verdict.to_string(),
                    opt(rep.exponent_phi),
                    opt(rep.exponent_phi1),
                    opt(rep.exponent_phi2),
                    by_decay.to_string(),
                ]);
            }
            stdout_csv(
                &[
                    "index",
                    "lambda_norm",
                    "lambda_bar",
                    "exponent_phi",
                    "exponent_phi1",
                    "exponent_phi2",
                    "lambda_bar_by_decay",
                ],
                &rows,
            )
        }
        Command::Forms { cfg } => {
            let cfg = cfg.load()?;
            let crit = critical(&cfg)?;
            let b0 = cfg.perturbation(&crit.potential)?;
            let f = perturbation_forms(&crit, &b0, cfg.tolerances.lambda)?;
            for (name, m) in [("Q1", &f.q1), ("R", &f.r), ("S", &f.s)] {
                let mut rows = Vec::new();
                for p in 0..m.nrows() {
                    for q in 0..m.ncols() {
                        let [re, im] = cplx(m[(p, q)]);
                        rows.push(vec![p.to_string(), q.to_string(), re, im]);
                    }
                }
                stdout_block(name, &["p", "q", "re", "im"], &rows)?;
            }
            let rows: Vec<Vec<String>> = f
                .spectrum
                .gammas
                .iter()
                .enumerate()
                .map(|(l, g)| vec![l.to_string(), num(*g)])
                .collect();
            stdout_block("gammas", &["l", "gamma"], &rows)?;
            let rows: Vec<Vec<String>> = f
                .splits
                .iter()
                .enumerate()
                .map(|(p, s)| {
                    let mut r = vec![p.to_string()];
                    for z in [s.s1, s.s2, s.s3] {
                        r.extend(cplx(z));
                    }
                    r.extend([num(s.c1), num(s.c2), num(s.c3)]);
                    r
                })
                .collect();
            stdout_block(
                "constants",
                &[
                    "index", "s1_re", "s1_im", "s2_re", "s2_im", "s3_re", "s3_im", "c1", "c2", "c3",
                ],
                &rows,
            )
        }
        Command::Sweep { cfg, plan, out, peak } => {
            let mut cfg = cfg.load()?;
            if let Some(p) = plan {
                cfg.sweep = LabConfig::from_file(&p)
                    .with_context(|| format!("reading {}", p.display()))?
                    .sweep;
            }
            with_context(&cfg, |ctx| {
                let res = resonance_sweep(ctx, &cfg.sweep.plan)?;
                let rows: Vec<Vec<String>> = res.records.iter().map(|r| sweep_row(ctx, r)).collect();
                emit(out.as_deref(), "records", &SweepRecord::HEADER, &rows)?;
                if let Some(dir) = &out {
                    let mut m = std::fs::File::create(dir.join("records.meta"))?;
                    writeln!(m, "fitted_c={}", num(res.fitted_c))?;
                    writeln!(m, "coupling={}", num(ctx.crit.coupling))?;
                }
                if peak {
                    let k = cfg.sweep.peak_k;
                    let g1 = ctx.spectrum.gammas[0];
                    let centre = -g1 * k * k;
                    let n = cfg.sweep.peak_points.max(3);
                    let mus: Vec<f64> = (0..n)
                        .map(|i| centre * (-3.0 + 8.0 * i as f64 / (n - 1) as f64))
                        .collect();
                    let rep = resonance_peak(ctx, k, 1, &mus, cfg.sweep.peak_iters)?;
                    let rows = vec![vec![
                        num(k),
                        num(rep.mu_peak),
                        num(rep.mu_predicted),
                        num(rep.sup_at_peak),
                    ]];
                    emit(
                        out.as_deref(),
                        "peak",
                        &["k", "mu_peak", "mu_predicted", "sup_at_peak"],
                        &rows,
                    )?;
                }
                Ok(())
            })
        }
        Command::Boundstates { cfg, out } => {
            let cfg = cfg.load()?;
            with_context(&cfg, |ctx| {
                let recs = boundstate_track(ctx, &cfg.sweep.bound_mus, &cfg.sweep.kappa)?;
                let rows: Vec<Vec<String>> = recs.iter().map(boundstate_row).collect();
                emit(out.as_deref(), "boundstates", &BoundStateRecord::HEADER, &rows)?;
                let pts: Vec<(f64, f64)> = recs
                    .iter()
                    .filter(|r| !r.boundary)
                    .map(|r| (r.kappa_sq, r.mu))
                    .collect();
                if !pts.is_empty() {
                    eprintln!(
                        "slope mu/kappa^2 = {}, gamma_1 = {}",
                        num(slope_through_origin(&pts)),
                        num(ctx.spectrum.gammas[0])
                    );
                }
                Ok(())
            })
        }
        Command::Derivatives { cfg, out, fd_step } => {
            let cfg = cfg.load()?;
            with_context(&cfg, |ctx| {
                let mut rows = Vec::new();
                for &mu in &cfg.sweep.plan.mus {
                    for &k in &cfg.sweep.plan.ks {
                        for &j in &cfg.sweep.plan.js {
                            let d = derivative_recursion(ctx, mu, j, k, cfg.sweep.derivative_order)?;
                            let fd = if fd_step > 0.0 {
                                derivative_fd_error(ctx, mu, j, k, fd_step)?
                            } else {
                                f64::NAN
                            };
                            rows.push(derivative_row(&d, fd));
                        }
                    }
                }
                let mut header = DerivativeBound::HEADER.to_vec();
                header.push("fd_rel_error");
                emit(out.as_deref(), "derivatives", &header, &rows)
            })
        }
        Command::InverseProbe { cfg, out } => {
            let cfg = cfg.load()?;
            with_context(&cfg, |ctx| {
                let recs = inverse_probe_grid(ctx, &cfg.sweep.inverse_mus, &cfg.sweep.plan.ks)?;
                let rows: Vec<Vec<String>> = recs.iter().map(inverse_row).collect();
                emit(out.as_deref(), "inverse", &InverseProbe::HEADER, &rows)
            })
        }
        Command::OracleCompare { cfg, levels } => oracle_compare(&cfg.load()?, &levels),
    }
}

fn with_context(cfg: &LabConfig, f: impl FnOnce(&ProbeContext) -> Result<()>) -> Result<()> {
    let crit = critical(cfg)?;
    let b0 = cfg.perturbation(&crit.potential)?;
    let forms = perturbation_forms(&crit, &b0, cfg.tolerances.lambda)?;
    let ctx = ProbeContext::new(&crit, &forms.spectrum, &b0, cfg.solver)?;
    f(&ctx)
}

fn sweep_row(ctx: &ProbeContext, r: &SweepRecord) -> Vec<String> {
    vec![
        num(r.mu),
        num(r.k),
        r.j.to_string(),
        num(r.sup_norm),
        num(r.n_part_norm),
        num(r.n_part_l2),
        num(r.residual_part),
        num(r.predicted_bound),
        r.at_resonance.to_string(),
        num(ctx.resonance_profile(r.mu, r.k)),
    ]
}

fn boundstate_row(r: &BoundStateRecord) -> Vec<String> {
    vec![
        num(r.mu),
        num(r.kappa),
        num(r.kappa_sq),
        num(r.energy),
        num(r.sigma_min),
        r.boundary.to_string(),
    ]
}

fn derivative_row(d: &DerivativeBound, fd: f64) -> Vec<String> {
    let w = |m: usize| d.weighted_norms.get(m).map(|v| num(*v)).unwrap_or_else(|| "nan".into());
    vec![
        num(d.mu),
        num(d.k),
        d.j.to_string(),
        num(d.alpha),
        w(1),
        w(2),
        d.at_resonance.to_string(),
        num(fd),
    ]
}

fn inverse_row(p: &InverseProbe) -> Vec<String> {
    vec![
        num(p.mu),
        num(p.k),
        num(p.par_of_a_phi),
        num(p.perp_of_a_phi),
        num(p.par_of_m_perp),
        num(p.perp_of_m_perp),
        num(p.denominator),
        p.at_resonance.to_string(),
    ]
}

/// Kronecker sequence in four dimensions.
fn quasi_random(i: usize) -> [f64; 4] {
    const ALPHA: [f64; 4] = [
        0.5698402909980532,
        0.3247179572447460,
        0.8566748838545029,
        0.2055694304005903,
    ];
    ALPHA.map(|a| ((i + 1) as f64 * a).fract())
}

fn kernel_check(points: usize, step: f64) -> Result<()> {
    let mut rows = Vec::new();
    for i in 0..points {
        let u = quasi_random(i);
        let k = 2.0 * u[0];
        let r = 0.2 + 2.8 * u[1];
        let ct = 2.0 * u[2] - 1.0;
        let st = (1.0 - ct * ct).sqrt();
        let ph = 2.0 * PI * u[3];
        let x = [r * st * ph.cos(), r * st * ph.sin(), r * ct];
        for order in 1..=3 {
            let e = kernel_fd_error(Momentum::real(k), x, order, step)?;
            rows.push(vec![num(k), num(r), order.to_string(), num(e)]);
        }
    }
    stdout_csv(&["k", "x", "order", "rel_err"], &rows)
}

fn oracle_compare(cfg: &LabConfig, levels: &[usize]) -> Result<()> {
    let radius = match cfg.potential.shape {
        ShapeSpec::Well { radius, .. } => radius,
        _ => bail!("oracle-compare needs a spherical well"),
    };
    let (lo, hi) = cfg.potential.bracket;
    let oracle = [-1, 1]
        .iter()
        .filter_map(|&kappa| {
            let w = RadialWell::new(0.0, radius, kappa).ok()?;
            threshold_condition(&w, lo, hi).ok().map(|r| r.depth_shooting)
        })
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .context("no radial threshold depth in the bracket")?;
    let mut rows = Vec::new();
    for &n in levels {
        let mut c = cfg.clone();
        c.grid_n = n;
        c.grid_l = None;
        if let ShapeSpec::Well { edge, .. } = &mut c.potential.shape {
            *edge = None;
        }
        let crit = critical(&c)?;
        rows.push(vec![
            n.to_string(),
            num(crit.coupling),
            num(oracle),
            num((crit.coupling - oracle) / oracle),
        ]);
    }
    stdout_csv(&["level", "g_star_3d", "v0_star_oracle", "gap"], &rows)
}
