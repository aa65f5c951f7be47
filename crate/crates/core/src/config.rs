//! `key = value` configuration files with sections `[grid]`, `[eval]`, `[potential]`,
//! `[perturbation]`, `[sweep]`, `[solver]` and `[tolerances]`.

use crate::criticality::CriticalOptions;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::krylov::GmresSettings;
use crate::ls_solver::{SolverMode, SolverSettings};
use crate::potential::{read_table, FourPotential, SampledPotential, Shape};
use crate::probes::{lin_space, log_space, KappaScan, SweepPlan};
use ini::{Ini, Properties};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Well { radius: f64, edge: Option<f64> },
    Gaussian { width: f64, radius: f64 },
    Table { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub shape: ShapeSpec,
    pub coupling: f64,
    pub components: [f64; 4],
    pub bracket: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PerturbationSpec {
    /// `B0` is the critical potential itself.
    SameAsCritical {
        scale: f64,
    },
    Shape(PotentialSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub plan: SweepPlan,
    pub peak_k: f64,
    pub peak_points: usize,
    pub peak_iters: usize,
    pub bound_mus: Vec<f64>,
    pub kappa: KappaScan,
    pub inverse_mus: Vec<f64>,
    pub derivative_order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub critical: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabConfig {
    pub grid_n: usize,
    /// Half width; `None` places the support edge `1.5 h` inside the box.
    pub grid_l: Option<f64>,
    pub eval_n: Option<usize>,
    pub eval_l: Option<f64>,
    pub potential: PotentialSpec,
    pub perturbation: PerturbationSpec,
    pub sweep: SweepSpec,
    pub solver: SolverSettings,
    pub tolerances: Tolerances,
}

fn get<T: FromStr>(sec: Option<&Properties>, section: &str, key: &str) -> Result<Option<T>> {
    match sec.and_then(|s| s.get(key)) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{section}.{key}: cannot parse '{v}'"))),
    }
}

fn get_list<T: FromStr>(sec: Option<&Properties>, section: &str, key: &str) -> Result<Option<Vec<T>>> {
    match sec.and_then(|s| s.get(key)) {
        None => Ok(None),
        Some(v) => v
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<T>()
                    .map_err(|_| Error::Config(format!("{section}.{key}: bad entry '{p}'")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some),
    }
}

/// `lo, hi, n` triple.
fn get_range(sec: Option<&Properties>, section: &str, key: &str) -> Result<Option<(f64, f64, usize)>> {
    match get_list::<f64>(sec, section, key)? {
        None => Ok(None),
        Some(v) if v.len() == 3 && v[2] >= 1.0 && v[2].fract() == 0.0 => Ok(Some((v[0], v[1], v[2] as usize))),
        Some(_) => Err(Error::Config(format!("{section}.{key}: expected 'lo, hi, count'"))),
    }
}

fn parse_potential(sec: Option<&Properties>, section: &str, base: &Path) -> Result<PotentialSpec> {
    let shape_name: String = get(sec, section, "shape")?.unwrap_or_else(|| "well".into());
    let radius: f64 = get(sec, section, "R")?.unwrap_or(1.0);
    let shape = match shape_name.as_str() {
        "well" | "spherical-well" => ShapeSpec::Well {
            radius,
            edge: get(sec, section, "w")?,
        },
        "gaussian" | "gaussian-bump" => ShapeSpec::Gaussian {
            width: get(sec, section, "w")?.unwrap_or(0.5 * radius),
            radius,
        },
        "table" => {
            let p: String =
                get(sec, section, "table")?.ok_or_else(|| Error::Config(format!("{section}.table is required")))?;
            ShapeSpec::Table { path: base.join(p) }
        }
        other => return Err(Error::Config(format!("{section}.shape: unknown shape '{other}'"))),
    };
    let components = match get::<String>(sec, section, "components")?.as_deref() {
        None | Some("electric") => [1.0, 0.0, 0.0, 0.0],
        Some("alpha") => {
            let w = get_list::<f64>(sec, section, "weights")?
                .ok_or_else(|| Error::Config(format!("{section}.weights required with alpha components")))?;
            if w.len() != 4 {
                return Err(Error::Config(format!("{section}.weights: expected four entries")));
            }
            [w[0], w[1], w[2], w[3]]
        }
        Some(other) => return Err(Error::Config(format!("{section}.components: unknown value '{other}'"))),
    };
    let bracket = match get_list::<f64>(sec, section, "bracket")? {
        None => (0.5, 20.0),
        Some(b) if b.len() == 2 => (b[0], b[1]),
        Some(_) => return Err(Error::Config(format!("{section}.bracket: expected 'lo, hi'"))),
    };
    Ok(PotentialSpec {
        shape,
        coupling: get(sec, section, "g")?.unwrap_or(1.0),
        components,
        bracket,
    })
}

impl LabConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse configuration text; relative table paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let known = [
            "grid",
            "eval",
            "potential",
            "perturbation",
            "sweep",
            "solver",
            "tolerances",
        ];
        for (name, _) in ini.iter() {
            if let Some(name) = name {
                if !known.contains(&name) {
                    return Err(Error::Config(format!("unknown section [{name}]")));
                }
            }
        }
        let grid = ini.section(Some("grid"));
        let grid_n: usize = get(grid, "grid", "n")?.unwrap_or(17);
        let grid_l = get(grid, "grid", "L")?;
        let eval = ini.section(Some("eval"));
        let potential = parse_potential(ini.section(Some("potential")), "potential", base)?;
        let pert = ini.section(Some("perturbation"));
        let perturbation = match get::<String>(pert, "perturbation", "shape")?.as_deref() {
            None | Some("same") => PerturbationSpec::SameAsCritical {
                scale: get(pert, "perturbation", "scale")?.unwrap_or(1.0),
            },
            Some(_) => PerturbationSpec::Shape(parse_potential(pert, "perturbation", base)?),
        };

        let sw = ini.section(Some("sweep"));
        let mus = match get_range(sw, "sweep", "mu_range")? {
            Some((lo, hi, n)) => lin_space(lo, hi, n),
            None => get_list(sw, "sweep", "mu")?.unwrap_or_else(|| vec![0.0]),
        };
        let ks = match get_range(sw, "sweep", "k_range")? {
            Some((lo, hi, n)) => log_space(lo, hi, n),
            None => get_list(sw, "sweep", "k")?.unwrap_or_else(|| log_space(0.02, 0.2, 5)),
        };
        let js = get_list(sw, "sweep", "j")?.unwrap_or_else(|| vec![1]);
        let mut kappa = KappaScan::default();
        kappa.points = get(sw, "sweep", "kappa_points")?.unwrap_or(kappa.points);
        kappa.kappa_min = get(sw, "sweep", "kappa_min")?.unwrap_or(kappa.kappa_min);
        kappa.kappa_max = get(sw, "sweep", "kappa_max")?.unwrap_or(kappa.kappa_max);
        let sweep = SweepSpec {
            plan: SweepPlan { mus, ks, js },
            peak_k: get(sw, "sweep", "peak_k")?.unwrap_or(0.05),
            peak_points: get(sw, "sweep", "peak_points")?.unwrap_or(9),
            peak_iters: get(sw, "sweep", "peak_iters")?.unwrap_or(12),
            bound_mus: get_list(sw, "sweep", "bound_mu")?.unwrap_or_else(|| vec![-0.0005, -0.001, -0.002, -0.004]),
            kappa,
            inverse_mus: get_list(sw, "sweep", "inverse_mu")?.unwrap_or_else(|| vec![-0.05, 0.0]),
            derivative_order: get(sw, "sweep", "order")?.unwrap_or(2),
        };

        let so = ini.section(Some("solver"));
        let mode = match get::<String>(so, "solver", "mode")?.as_deref() {
            None | Some("iterative") => SolverMode::Iterative,
            Some("dense") => SolverMode::Dense,
            Some(other) => return Err(Error::Config(format!("solver.mode: unknown mode '{other}'"))),
        };
        let d = GmresSettings::default();
        let gmres = GmresSettings {
            tol: get(so, "solver", "tol")?.unwrap_or(d.tol),
            restart: get(so, "solver", "restart")?.unwrap_or(d.restart),
            max_iter: get(so, "solver", "max_iter")?.unwrap_or(d.max_iter),
        };
        let eval_n: Option<usize> = get(eval, "eval", "n")?;
        let solver = SolverSettings { mode, gmres, eval_n };

        let to = ini.section(Some("tolerances"));
        let dc = CriticalOptions::default();
        let tolerances = Tolerances {
            critical: get(to, "tolerances", "critical")?.unwrap_or(dc.critical_tol),
            lambda: get(to, "tolerances", "lambda")?.unwrap_or(dc.lambda_tol),
        };
        let cfg = LabConfig {
            grid_n,
            grid_l,
            eval_n,
            eval_l: get(eval, "eval", "L")?,
            potential,
            perturbation,
            sweep,
            solver,
            tolerances,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_n < 5 || self.grid_n % 2 == 0 {
            return Err(Error::Config(format!(
                "grid.n = {} must be odd and at least 5",
                self.grid_n
            )));
        }
        if let Some(n) = self.eval_n {
            if n % 2 == 0 || n < self.grid_n {
                return Err(Error::Config(format!("eval.n = {n} must be odd and at least grid.n")));
            }
        }
        self.sweep.plan.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// The support grid. Without `grid.L` the spacing is `2 R / (n - 3)`.
    pub fn grid(&self) -> Result<Grid3> {
        let g = match self.grid_l {
            Some(l) => Grid3::new(self.grid_n, l)?,
            None => {
                let r = match &self.potential.shape {
                    ShapeSpec::Well { radius, .. } | ShapeSpec::Gaussian { radius, .. } => *radius,
                    ShapeSpec::Table { .. } => {
                        return Err(Error::Config("grid.L is required for tabulated potentials".into()))
                    }
                };
                Grid3::with_spacing(self.grid_n, 2.0 * r / (self.grid_n as f64 - 3.0))?
            }
        };
        if let Some(l) = self.eval_l {
            let e = self.solver.eval_grid(g)?;
            if (e.half_width - l).abs() > 1e-9 * l.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "eval.L = {l} is not aligned with the support grid (expected {})",
                    e.half_width
                )));
            }
        }
        Ok(g)
    }

    fn build(&self, spec: &PotentialSpec, grid: Grid3) -> Result<FourPotential> {
        let shape = match &spec.shape {
            ShapeSpec::Well { radius, edge } => Shape::SphericalWell {
                radius: *radius,
                edge: edge.unwrap_or(grid.spacing()),
            },
            ShapeSpec::Gaussian { width, radius } => Shape::GaussianBump {
                width: *width,
                radius: *radius,
            },
            ShapeSpec::Table { path } => read_table(path, grid)?,
        };
        Ok(FourPotential {
            shape,
            coupling: spec.coupling,
            components: spec.components,
        })
    }

    /// The potential of `[potential]` with its configured coupling.
    pub fn potential(&self) -> Result<FourPotential> {
        self.build(&self.potential, self.grid()?)
    }

    /// The potential shape at unit coupling, sampled on the support grid.
    pub fn unit_potential(&self) -> Result<SampledPotential> {
        let g = self.grid()?;
        self.build(&self.potential, g)?.with_coupling(1.0).sample(g)
    }

    /// `B0` given the critical potential.
    pub fn perturbation(&self, critical: &SampledPotential) -> Result<SampledPotential> {
        match &self.perturbation {
            PerturbationSpec::SameAsCritical { scale } => Ok(critical.scale(*scale)),
            PerturbationSpec::Shape(spec) => self.build(spec, critical.grid)?.sample(critical.grid),
        }
    }

    pub fn critical_options(&self) -> CriticalOptions {
        CriticalOptions {
            critical_tol: self.tolerances.critical,
            lambda_tol: self.tolerances.lambda,
            solver: self.solver,
            ..CriticalOptions::default()
        }
    }
}
