//! JSON run configuration: space, kernel, interpolation, measures, solver
//! settings. The fully-resolved configuration (defaults filled) is echoed
//! next to the outputs for reproducibility.

use anyhow::{bail, Context, Result};
use nlwass::interpolation::Interpolation;
use nlwass::kernels::{KernelFamily, RadialKernel};
use nlwass::solver::SolveConfig;
use nlwass::space::{self, Density, DiscreteSpace};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SpaceSpec {
    Grid {
        dim: usize,
        extent: f64,
        n_per_axis: usize,
    },
    TwoPoint {
        w: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: String,
    pub dim: usize,
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_s: Option<f64>,
    /// CSV file of `(r, value)` rows for a tabulated profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum MeasureSpec {
    Dirac { at: Vec<f64> },
    UniformBall { center: Vec<f64>, radius: f64 },
    GaussianBump { center: Vec<f64>, width: f64 },
    FromCsv { file: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "d_time_steps")]
    pub time_steps: usize,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_feas_tol")]
    pub feas_tol: f64,
    #[serde(default = "d_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "d_rho_floor")]
    pub rho_floor: f64,
    #[serde(default = "d_stationarity_tol")]
    pub stationarity_tol: f64,
    #[serde(default = "d_tau_factor")]
    pub tau_factor: f64,
}

fn d_time_steps() -> usize {
    16
}
fn d_max_iters() -> usize {
    50_000
}
fn d_feas_tol() -> f64 {
    1e-7
}
fn d_gap_tol() -> f64 {
    1e-7
}
fn d_rho_floor() -> f64 {
    1e-9
}
fn d_stationarity_tol() -> f64 {
    1e-3
}
fn d_tau_factor() -> f64 {
    0.05
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            time_steps: d_time_steps(),
            max_iters: d_max_iters(),
            feas_tol: d_feas_tol(),
            gap_tol: d_gap_tol(),
            rho_floor: d_rho_floor(),
            stationarity_tol: d_stationarity_tol(),
            tau_factor: d_tau_factor(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    pub theta: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<MeasureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<MeasureSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Kernel scales for the convergence sweep, coarse to fine.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    /// Support radius bound for the dual lower-bound estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
    /// Laplace smoothing scale (defaults to sqrt of the kernel scale).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    /// Test fixture: scales certificate right-hand sides (negative-path
    /// testing only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify_rhs_scale: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.space {
            SpaceSpec::Grid {
                dim,
                extent,
                n_per_axis,
            } => {
                if *dim == 0 || *extent <= 0.0 || *n_per_axis < 2 {
                    bail!("invalid grid spec");
                }
            }
            SpaceSpec::TwoPoint { w } => {
                if !(*w > 0.0) {
                    bail!("two-point weight must be positive");
                }
            }
        }
        if !(self.kernel.scale > 0.0) {
            bail!("kernel scale must be positive");
        }
        self.theta_obj()?;
        Ok(())
    }

    pub fn kernel_obj(&self) -> Result<RadialKernel> {
        let family = match self.kernel.family.as_str() {
            "indicator" => KernelFamily::Indicator,
            "smooth-bump" => KernelFamily::SmoothBump,
            "truncated-fractional" => KernelFamily::TruncatedFractional {
                s: self.kernel.s.context("fractional kernel needs `s`")?,
                c_s: self.kernel.c_s.context("fractional kernel needs `c_s`")?,
            },
            "custom" => {
                let file = self.kernel.file.as_ref().context("custom kernel needs `file`")?;
                KernelFamily::Custom {
                    table: load_profile_csv(Path::new(file))?,
                }
            }
            other => bail!("unknown kernel family `{other}`"),
        };
        Ok(RadialKernel::new(family, self.kernel.dim, self.kernel.scale)?)
    }

    pub fn theta_obj(&self) -> Result<Interpolation> {
        Ok(match self.theta.as_str() {
            "arithmetic" => Interpolation::arithmetic(),
            "geometric" => Interpolation::geometric(),
            "logarithmic" => Interpolation::logarithmic(),
            "harmonic" => Interpolation::harmonic(),
            other => bail!("unknown interpolation `{other}`"),
        })
    }

    pub fn space_obj(&self, kernel: &RadialKernel) -> Result<DiscreteSpace> {
        Ok(match &self.space {
            SpaceSpec::Grid {
                dim,
                extent,
                n_per_axis,
            } => DiscreteSpace::grid(*dim, *extent, *n_per_axis, kernel)?,
            SpaceSpec::TwoPoint { w } => DiscreteSpace::two_point(*w)?,
        })
    }

    pub fn solver_config(&self) -> SolveConfig {
        SolveConfig {
            time_steps: self.solver.time_steps,
            max_iters: self.solver.max_iters,
            feas_tol: self.solver.feas_tol,
            gap_tol: self.solver.gap_tol,
            rho_floor: self.solver.rho_floor,
            stationarity_tol: self.solver.stationarity_tol,
            tau_factor: self.solver.tau_factor,
            ..SolveConfig::default()
        }
    }
}

pub fn realize_measure(spec: &MeasureSpec, space: &DiscreteSpace) -> Result<Density> {
    Ok(match spec {
        MeasureSpec::Dirac { at } => {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for i in 0..space.len() {
                let d: f64 = space
                    .point(i)
                    .iter()
                    .zip(at)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            Density::dirac(space, best)
        }
        MeasureSpec::UniformBall { center, radius } => space::uniform_ball(space, center, *radius)?,
        MeasureSpec::GaussianBump { center, width } => space::gaussian_bump(space, center, *width)?,
        MeasureSpec::FromCsv { file } => {
            let values = load_measure_csv(Path::new(file), space.len())?;
            space::normalized_density(space, values)?
        }
    })
}

/// Pointwise profile of a measure spec, for sweeps that rebuild grids.
pub fn measure_profile(spec: &MeasureSpec) -> Result<Box<dyn Fn(&[f64]) -> f64>> {
    Ok(match spec {
        MeasureSpec::UniformBall { center, radius } => {
            let (c, r) = (center.clone(), *radius);
            Box::new(move |x: &[f64]| {
                let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2.sqrt() <= r {
                    1.0
                } else {
                    0.0
                }
            })
        }
        MeasureSpec::GaussianBump { center, width } => {
            let (c, w) = (center.clone(), *width);
            Box::new(move |x: &[f64]| {
                let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (w * w)).exp()
            })
        }
        _ => bail!("the sweep needs a pointwise measure profile (ball or bump)"),
    })
}

fn load_profile_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading profile {}", path.display()))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let r: f64 = parts
            .next()
            .context("missing r column")?
            .trim()
            .parse()
            .with_context(|| format!("line {} of {}", ln + 1, path.display()))?;
        let v: f64 = parts
            .next()
            .context("missing value column")?
            .trim()
            .parse()
            .with_context(|| format!("line {} of {}", ln + 1, path.display()))?;
        rows.push((r, v));
    }
    Ok(rows)
}

fn load_measure_csv(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading measure {}", path.display()))?;
    let mut values = vec![0.0; n];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let idx: usize = parts
            .next()
            .context("missing index column")?
            .trim()
            .parse()
            .with_context(|| format!("line {} of {}", ln + 1, path.display()))?;
        let v: f64 = parts
            .next()
            .context("missing value column")?
            .trim()
            .parse()
            .with_context(|| format!("line {} of {}", ln + 1, path.display()))?;
        if idx >= n {
            bail!("measure index {idx} out of range (space has {n} nodes)");
        }
        values[idx] = v;
    }
    Ok(values)
}
