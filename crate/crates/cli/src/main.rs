//! `nlwass` command line: distances, geodesics, certificate batteries,
//! convergence sweeps, and the Hamilton-Jacobi dual pipeline.

mod config;
mod svg;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{measure_profile, realize_measure, RunConfig};
use nlwass::certify::{self, BoundCertificate, Regime};
use nlwass::dynamics;
use nlwass::reference::{self, HjPipelineConfig};
use nlwass::solver::{self, SolveStatus};
use nlwass::space::{self, Density, DiscreteSpace};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nlwass", about = "Nonlocal Wasserstein distances on finite discretizations")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker-thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized batteries.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the distance between the configured measures.
    Distance,
    /// Solve and export the full geodesic path.
    Geodesic,
    /// Run a certificate battery.
    Certify {
        /// Selector: lower-bounds | dirac-floor | phi | tv-upper |
        /// w2-convolution | disintegration | all. Empty lists the names.
        #[arg(long)]
        which: Option<String>,
    },
    /// Kernel-localization sweep over the configured scale list.
    Converge,
    /// Hamilton-Jacobi dual lower-bound pipeline.
    HjLower,
    /// Exact-nonlocalization refinement study (translating bump).
    Nonlocalize,
    /// Print kernel moments, derived constants, and the regime.
    KernelInfo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required for this subcommand")?;
    RunConfig::load(path)
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(
        out.join("config_resolved.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Distance => cmd_distance(cli, false),
        Command::Geodesic => cmd_distance(cli, true),
        Command::Certify { which } => cmd_certify(cli, which.as_deref()),
        Command::Converge => cmd_converge(cli),
        Command::HjLower => cmd_hj_lower(cli),
        Command::Nonlocalize => cmd_nonlocalize(cli),
        Command::KernelInfo => cmd_kernel_info(cli),
    }
}

/// Serializable wrapper over the solve report with status spelled out.
#[derive(serde::Serialize)]
struct ReportOut<'a> {
    status: &'a str,
    distance: f64,
    objective: f64,
    iterations: usize,
    fixed_point_residual: f64,
    nce_residual: f64,
    action_per_step: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    floor_continuation: Option<&'a solver::FloorContinuation>,
}

fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIters => "max-iters",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::InfiniteCost => "infinite-cost",
    }
}

fn cmd_distance(cli: &Cli, export_path: bool) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let theta = cfg.theta_obj()?;
    let space = cfg.space_obj(&kernel)?;
    let mu0 = realize_measure(cfg.mu0.as_ref().context("config needs mu0")?, &space)?;
    let mu1 = realize_measure(cfg.mu1.as_ref().context("config needs mu1")?, &space)?;
    let sconfig = cfg.solver_config();

    // Disconnected-regime obstruction: a Dirac endpoint singular to the
    // other measure has infinite continuum distance; the floored solves
    // provide the finite relaxation diagnostics.
    let regime = certify::classify_regime(&kernel, &theta);
    let singular_dirac = |a: &Density, b: &Density| -> bool {
        let atoms: Vec<usize> = (0..space.len()).filter(|&i| a.values[i] > 0.0).collect();
        atoms.len() == 1 && b.values[atoms[0]] <= 0.0
    };
    let mut continuation = None;
    let mut status_override = None;
    if regime == Regime::Disconnected
        && (singular_dirac(&mu0, &mu1) || singular_dirac(&mu1, &mu0))
    {
        let cont = solver::floor_continuation(&space, &theta, &mu0, &mu1, &sconfig, 4, 10.0)?;
        continuation = Some(cont);
        status_override = Some(SolveStatus::InfiniteCost);
    }
    let mut rep = solver::solve(&space, &theta, &mu0, &mu1, &sconfig)?;
    if let Some(s) = status_override {
        rep.status = s;
    }
    let out = ReportOut {
        status: status_str(rep.status),
        distance: rep.distance,
        objective: rep.objective,
        iterations: rep.iterations,
        fixed_point_residual: rep.fixed_point_residual,
        nce_residual: rep.nce_residual,
        action_per_step: &rep.action_per_step,
        floor_continuation: continuation.as_ref(),
    };
    fs::write(
        cli.out.join("report.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    // Geodesic CSV: t, node, density.
    let mut csv = String::from("t,node,density\n");
    let t_steps = rep.path.steps();
    for (k, rho) in rep.path.densities.iter().enumerate() {
        let t = k as f64 / t_steps as f64;
        for (i, v) in rho.values.iter().enumerate() {
            csv.push_str(&format!("{t},{i},{v}\n"));
        }
    }
    fs::write(cli.out.join("geodesic.csv"), csv)?;
    if export_path {
        let mut fx = String::from("t,edge,flux\n");
        for (k, flux) in rep.path.fluxes.iter().enumerate() {
            let t = (k as f64 + 0.5) / t_steps as f64;
            for (e, v) in flux.values.iter().enumerate() {
                fx.push_str(&format!("{t},{e},{v}\n"));
            }
        }
        fs::write(cli.out.join("geodesic_flux.csv"), fx)?;
    }
    println!("distance={:.6} status={}", rep.distance, status_str(rep.status));
    Ok(match rep.status {
        SolveStatus::Converged => ExitCode::SUCCESS,
        SolveStatus::MaxIters => ExitCode::from(2),
        SolveStatus::InfiniteCost => ExitCode::from(3),
        SolveStatus::Infeasible => ExitCode::from(1),
    })
}

const CERT_SELECTORS: &[&str] = &[
    "lower-bounds",
    "dirac-floor",
    "phi",
    "tv-upper",
    "w2-convolution",
    "disintegration",
    "all",
];

fn cmd_certify(cli: &Cli, which: Option<&str>) -> Result<ExitCode> {
    let Some(which) = which else {
        println!("available certificate batteries:");
        for s in CERT_SELECTORS {
            println!("  {s}");
        }
        return Ok(ExitCode::SUCCESS);
    };
    if !CERT_SELECTORS.contains(&which) {
        bail!("unknown selector `{which}`; run without --which to list");
    }
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let theta = cfg.theta_obj()?;
    let space = cfg.space_obj(&kernel)?;
    let sconfig = cfg.solver_config();
    let regime = certify::classify_regime(&kernel, &theta);
    let mu0 = match cfg.mu0.as_ref() {
        Some(m) => realize_measure(m, &space)?,
        None => space::gaussian_bump(&space, space.point(space.len() / 4), 0.1)?,
    };
    let mu1 = match cfg.mu1.as_ref() {
        Some(m) => realize_measure(m, &space)?,
        None => space::gaussian_bump(&space, space.point(3 * space.len() / 4), 0.15)?,
    };

    let mut certs: Vec<BoundCertificate> = Vec::new();
    let run_lower = which == "lower-bounds" || which == "all";
    let run_floor = which == "dirac-floor" || which == "all";
    let run_phi = which == "phi" || which == "all";
    let run_tv = which == "tv-upper" || which == "all";
    let run_conv = which == "w2-convolution" || which == "all";
    let run_dis = which == "disintegration" || which == "all";
    if run_lower {
        let rep = solver::solve(&space, &theta, &mu0, &mu1, &sconfig)?;
        certs.extend(certify::certify_lower_bounds(
            &space,
            &mu0,
            &mu1,
            rep.distance,
            2e-3 + 2.0 * rep.distance * sconfig.gap_tol.sqrt(),
        )?);
    }
    if run_floor && regime == Regime::StrongTopology {
        let node = space.len() / 2;
        let dirac = Density::dirac(&space, node);
        // A disjoint target: uniform on the far quarter.
        let far: Vec<f64> = (0..space.len())
            .map(|i| {
                if space.distance(node, i) > space.diameter() * 0.4 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let nu = space::normalized_density(&space, far)?;
        let rep = solver::solve(&space, &theta, &dirac, &nu, &sconfig)?;
        certs.push(certify::certify_dirac_floor(
            &space, &theta, &kernel, node, &nu, rep.distance, 2e-3,
        )?);
    }
    if run_phi && regime == Regime::WeakTopology {
        let center = space.len() / 2;
        let eps = kernel.scale;
        let near: Vec<(usize, usize)> = (0..space.len())
            .filter(|&i| {
                let t = space.distance(center, i) / eps;
                t > 0.0 && t < 0.375
            })
            .take(2)
            .map(|i| (center, i))
            .collect();
        certs.extend(certify::certify_phi_bound(
            &space, &theta, &kernel, &near, &sconfig, 1e-6,
        )?);
    }
    if run_tv && regime != Regime::Disconnected && (kernel.scale - 1.0).abs() < 1e-12 {
        certs.extend(certify::certify_tv_upper(
            &space, &theta, &kernel, &mu0, &mu1, &sconfig, 1e-6,
        )?);
    }
    if run_conv {
        certs.extend(certify::certify_convolution_w2(
            &space,
            &mu0,
            &kernel,
            cfg.smoothing.unwrap_or(kernel.scale.sqrt()),
            1e-9,
        )?);
    }
    if run_dis && regime != Regime::Disconnected {
        // A small-atom pair built from the configured measures' top atoms.
        let take_atoms = |d: &Density, n: usize| -> Density {
            let mut idx: Vec<usize> = (0..space.len()).collect();
            idx.sort_by(|&a, &b| d.values[b].partial_cmp(&d.values[a]).unwrap());
            let mut v = vec![0.0; space.len()];
            for &i in idx.iter().take(n) {
                v[i] = d.values[i].max(1e-9);
            }
            space::normalized_density(&space, v).expect("atoms carry mass")
        };
        certs.push(certify::certify_disintegration(
            &space,
            &theta,
            &take_atoms(&mu0, 4),
            &take_atoms(&mu1, 4),
            &sconfig,
            1e-3,
        )?);
    }
    if let Some(scale) = cfg.certify_rhs_scale {
        for c in certs.iter_mut() {
            let scaled = BoundCertificate::new(
                &c.name,
                c.lhs,
                c.rhs * scale,
                c.tolerance,
                c.inputs_digest.clone(),
            );
            *c = scaled;
        }
    }
    fs::write(
        cli.out.join("certificates.json"),
        serde_json::to_string_pretty(&certs)?,
    )?;
    let mut csv = String::from("name,lhs,rhs,margin,pass\n");
    for c in &certs {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name, c.lhs, c.rhs, c.margin, c.pass
        ));
    }
    fs::write(cli.out.join("certificates.csv"), csv)?;
    let mut all_pass = true;
    for c in &certs {
        println!(
            "{:<28} lhs={:<13.6e} rhs={:<13.6e} margin={:+.3e} {}",
            c.name,
            c.lhs,
            c.rhs,
            c.margin,
            if c.pass { "pass" } else { "FAIL" }
        );
        if !c.pass {
            eprintln!("FAILED: {} (margin {:+.6e})", c.name, c.margin);
            all_pass = false;
        }
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

fn cmd_converge(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let theta = cfg.theta_obj()?;
    let eps_list = cfg.eps_list.clone().context("config needs eps_list")?;
    let extent = match &cfg.space {
        config::SpaceSpec::Grid { extent, .. } => *extent,
        _ => bail!("the convergence sweep needs a grid space"),
    };
    let p0 = measure_profile(cfg.mu0.as_ref().context("config needs mu0")?)?;
    let p1 = measure_profile(cfg.mu1.as_ref().context("config needs mu1")?)?;
    let radius = cfg.support_radius.context("config needs support_radius")?;
    let sconfig = cfg.solver_config();
    let table = match certify::converge_experiment(
        &*p0, &*p1, &kernel, &theta, &eps_list, extent, radius, &sconfig,
    ) {
        Ok(t) => t,
        Err(nlwass::Error::Precondition(msg)) => {
            eprintln!("resolution precondition violated: {msg}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = String::from("eps,distance,scaled,w2,upper_env,lower_env\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.eps, r.distance, r.scaled, r.w2, r.upper_envelope, r.lower_envelope_rhs
        ));
    }
    fs::write(cli.out.join("converge.csv"), csv)?;
    let plot = svg::LogLogPlot {
        title: "localization error |scaled - W2| vs kernel scale".into(),
        series: table.rows.iter().map(|r| (r.eps, r.error.max(1e-16))).collect(),
        guide_slope: Some(0.5),
    };
    fs::write(cli.out.join("converge.svg"), plot.render())?;
    fs::write(
        cli.out.join("converge.json"),
        serde_json::to_string_pretty(&table)?,
    )?;
    for r in &table.rows {
        println!(
            "eps={:<6} scaled={:<10.6} w2={:<10.6} err={:<10.3e} upper_ok={} lower_ok={}",
            r.eps, r.scaled, r.w2, r.error, r.upper_ok, r.lower_ok
        );
    }
    Ok(if table.all_envelopes_hold {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

fn cmd_hj_lower(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let theta = cfg.theta_obj()?;
    let space = cfg.space_obj(&kernel)?;
    let mu0 = realize_measure(cfg.mu0.as_ref().context("config needs mu0")?, &space)?;
    let mu1 = realize_measure(cfg.mu1.as_ref().context("config needs mu1")?, &space)?;
    let radius = cfg.support_radius.context("config needs support_radius")?;
    let sconfig = cfg.solver_config();
    let rep = solver::solve(&space, &theta, &mu0, &mu1, &sconfig)?;
    let pipeline = HjPipelineConfig {
        solver: sconfig,
        seed: cli.seed,
        ..Default::default()
    };
    let report = reference::hj_lower_bound(
        &space, &kernel, &theta, &mu0, &mu1, radius, &rep, &pipeline,
    )?;
    fs::write(
        cli.out.join("hj_lower.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "w2={:.6} nonlocal={:.6} smoothed={:.6} pairing={:.6} subsolution_ok={} pairing_ok={} headline_ok={}",
        report.w2,
        report.nonlocal_distance,
        report.smoothed_distance,
        report.pairing,
        report.subsolution_ok,
        report.pairing_ok,
        report.headline_ok
    );
    Ok(
        if report.subsolution_ok && report.pairing_ok && report.headline_ok {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(4)
        },
    )
}

fn cmd_nonlocalize(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let extent = match &cfg.space {
        config::SpaceSpec::Grid { extent, .. } => *extent,
        _ => bail!("the refinement study needs a grid space"),
    };
    let mut csv = String::from("n,residual,control_residual\n");
    let mut rows = Vec::new();
    for &n in &[64usize, 128, 256] {
        let space = DiscreteSpace::grid(1, extent, n, &kernel)?;
        let ratio = kernel.scale / space.min_spacing();
        if (ratio - ratio.round()).abs() > 1e-9 {
            eprintln!(
                "note: kernel support covers a fractional cell count ({ratio:.3}); \
                 the refinement constant will wobble"
            );
        }
        let (conv, ctrl) = translating_bump_residuals(&space, &kernel, n)?;
        csv.push_str(&format!("{n},{conv},{ctrl}\n"));
        rows.push((n, conv, ctrl));
    }
    fs::write(cli.out.join("nonlocalize.csv"), csv)?;
    for (n, c, u) in &rows {
        println!("n={n}: residual={c:.6e} control={u:.6e}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Residuals of the exact-nonlocalization construction for a translating
/// bump, and of the control that skips the density smoothing.
pub fn translating_bump_residuals(
    space: &DiscreteSpace,
    kernel: &nlwass::kernels::RadialKernel,
    n: usize,
) -> Result<(f64, f64)> {
    let t_steps = n;
    let extent = space.diameter() + space.min_spacing();
    // Width and travel chosen so the bump plus kernel reach stays far from
    // the domain boundary (boundary effects would floor the residual).
    let w2 = 0.02 * (extent / 1.6) * (extent / 1.6);
    let travel = 0.25 * extent;
    let bump = move |x: f64, t: f64| -> f64 {
        let c = extent * 0.35 + travel * t;
        (-(x - c) * (x - c) / w2).exp() + 0.05
    };
    let speed = travel;
    let mut rho_path = Vec::with_capacity(t_steps + 1);
    for k in 0..=t_steps {
        let t = k as f64 / t_steps as f64;
        let values: Vec<f64> = (0..space.len()).map(|i| bump(space.point(i)[0], t)).collect();
        rho_path.push(Density::new(values)?);
    }
    let mut vf_path = Vec::with_capacity(t_steps);
    for k in 0..t_steps {
        let t = (k as f64 + 0.5) / t_steps as f64;
        // Local flux J = speed * (bump part of rho); the constant background
        // does not move.
        let values: Vec<f64> = (0..space.len())
            .map(|i| speed * (bump(space.point(i)[0], t) - 0.05))
            .collect();
        let _ = speed;
        vf_path.push(values);
    }
    let path = dynamics::nonlocalize(space, kernel, &rho_path, &vf_path)?;
    let residual = dynamics::nce_residual(space, &path);
    let control = nlwass::space::Path {
        densities: rho_path,
        fluxes: path.fluxes.clone(),
    };
    let control_residual = dynamics::nce_residual(space, &control);
    Ok((residual, control_residual))
}

fn cmd_kernel_info(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    echo_config(&cfg, &cli.out)?;
    let kernel = cfg.kernel_obj()?;
    let theta = cfg.theta_obj()?;
    let regime = certify::classify_regime(&kernel, &theta);
    #[derive(serde::Serialize)]
    struct Info {
        regime: String,
        c_theta: f64,
        kappa: f64,
        moments: Vec<Option<f64>>,
        zeta_mass: Option<f64>,
        constants: certify::ConstantSet,
    }
    let moments: Vec<Option<f64>> = (0..=5u32).map(|p| kernel.moment(p).ok()).collect();
    let info = Info {
        regime: format!("{regime:?}"),
        c_theta: theta.c_theta(),
        kappa: theta.kappa(),
        moments,
        zeta_mass: kernel.zeta_mass().ok(),
        constants: certify::assemble_constants(&kernel, &theta)?,
    };
    fs::write(
        cli.out.join("kernel_info.json"),
        serde_json::to_string_pretty(&info)?,
    )?;
    println!("regime={:?} c_theta={:.9} kappa={:.4}", regime, theta.c_theta(), theta.kappa());
    for (p, m) in info.moments.iter().enumerate() {
        match m {
            Some(v) => println!("M{p} = {v:.9}"),
            None => println!("M{p} diverges"),
        }
    }
    Ok(ExitCode::SUCCESS)
}
