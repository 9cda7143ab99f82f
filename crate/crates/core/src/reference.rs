//! Exact classical transport references (W1, W2, Kantorovich potentials),
//! the Hopf-Lax evolution, and the smoothed nonlocal Hamilton-Jacobi
//! subsolution pipeline that furnishes dual lower bounds.

use crate::interpolation::Interpolation;
use crate::kernels::{Convolution, RadialKernel, SmoothingKernel};
use crate::solver::{solve_smoothed, SolveConfig, SolveReport};
use crate::space::{Density, DiscreteSpace};
use crate::{Error, Result};
use serde::Serialize;

mod simplex;

pub use simplex::TransportPlan;

/// Exact transport with an arbitrary cost on node coordinates (exposed for
/// table-driven sub-problems such as the disintegration right-hand side).
pub fn simplex_solve_for_table(
    space: &DiscreteSpace,
    mu: &Density,
    nu: &Density,
    cost: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<TransportPlan> {
    simplex::solve_transport(space, mu, nu, cost)
}

/// Exact squared-quadratic-cost transport via the network simplex; returns
/// `(W2, plan)`.
pub fn w2(space: &DiscreteSpace, mu: &Density, nu: &Density) -> Result<(f64, TransportPlan)> {
    let plan = simplex::solve_transport(space, mu, nu, |x, y| {
        0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    })?;
    Ok(((2.0 * plan.cost).max(0.0).sqrt(), plan))
}

/// Exact linear-cost transport distance (the Monge distance).
pub fn w1(space: &DiscreteSpace, mu: &Density, nu: &Density) -> Result<f64> {
    let plan = simplex::solve_transport(space, mu, nu, |x, y| {
        x.iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })?;
    Ok(plan.cost)
}

/// 1D closed form by monotone rearrangement of atom lists (oracle for the
/// simplex path). `p` is the cost exponent.
pub fn wp_quantile_1d(
    positions_mu: &[(f64, f64)],
    positions_nu: &[(f64, f64)],
    p: f64,
) -> f64 {
    let mut a: Vec<(f64, f64)> = positions_mu.to_vec();
    let mut b: Vec<(f64, f64)> = positions_nu.to_vec();
    a.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    b.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (0.0f64, 0.0f64);
    while i < a.len() && j < b.len() {
        let ma = a[i].1 - ra;
        let mb = b[j].1 - rb;
        let m = ma.min(mb);
        cost += m * (a[i].0 - b[j].0).abs().powf(p);
        if ma <= mb {
            ra = 0.0;
            i += 1;
            rb += m;
        } else {
            rb = 0.0;
            j += 1;
            ra += m;
        }
    }
    cost
}

/// A nodal potential with a time label.
#[derive(Debug, Clone, Serialize)]
pub struct Potential {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Potential {
    /// Largest difference quotient over kernel-range node pairs; an upper
    /// bound for the grid-restricted Lipschitz constant.
    pub fn lipschitz(&self, space: &DiscreteSpace, range: f64) -> f64 {
        let mut lip = 0.0f64;
        for i in 0..space.len() {
            for j in (i + 1)..space.len() {
                let d = space.distance(i, j);
                if d <= range {
                    lip = lip.max((self.values[i] - self.values[j]).abs() / d);
                }
            }
        }
        lip
    }
}

/// Kantorovich potentials for the half-squared cost: maximizers of
/// `int phi1 dnu - int phi0 dmu` over `phi1(y) - phi0(x) <= |x-y|^2 / 2`,
/// extended to every node by c-transforms. The dual objective equals
/// `W2^2 / 2` up to the stated gap.
pub fn kantorovich_potential(
    space: &DiscreteSpace,
    mu: &Density,
    nu: &Density,
) -> Result<(Potential, Potential, f64)> {
    let plan = simplex::solve_transport(space, mu, nu, |x, y| {
        0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    })?;
    let c = |i: usize, j: usize| -> f64 {
        let d = space.distance(i, j);
        0.5 * d * d
    };
    // Duals are defined on the supports; extend by c-transforms to the full
    // node set: phi1 = (phi0)^c over the mu-support, then phi0 = (phi1)_c.
    let support_mu = &plan.support_mu;
    let mut phi0_support: Vec<(usize, f64)> = support_mu
        .iter()
        .map(|&(node, lp_index)| (node, -plan.u[lp_index]))
        .collect();
    // Normalize the additive gauge.
    if let Some(&(_, v0)) = phi0_support.first() {
        for p in phi0_support.iter_mut() {
            p.1 -= v0;
        }
    }
    let mut phi1 = vec![0.0; space.len()];
    for (j, slot) in phi1.iter_mut().enumerate() {
        *slot = phi0_support
            .iter()
            .map(|&(i, f)| f + c(i, j))
            .fold(f64::INFINITY, f64::min);
    }
    let mut phi0 = vec![0.0; space.len()];
    for (i, slot) in phi0.iter_mut().enumerate() {
        *slot = phi1
            .iter()
            .enumerate()
            .map(|(j, &f)| f - c(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
    }
    let m = space.ref_masses();
    let dual: f64 = phi1
        .iter()
        .zip(&nu.values)
        .zip(m)
        .map(|((f, v), mm)| f * v * mm)
        .sum::<f64>()
        - phi0
            .iter()
            .zip(&mu.values)
            .zip(m)
            .map(|((f, v), mm)| f * v * mm)
            .sum::<f64>();
    let gap = (dual - plan.cost).abs();
    Ok((
        Potential {
            values: phi0,
            time: 0.0,
        },
        Potential {
            values: phi1,
            time: 1.0,
        },
        gap,
    ))
}

/// Hopf-Lax evolution `phi_t(x) = min_y { phi0(y) + |x - y|^2 / (2 t) }` by
/// exhaustive minimization over nodes.
pub fn hopf_lax(space: &DiscreteSpace, phi0: &Potential, t: f64) -> Potential {
    assert!(t > 0.0, "Hopf-Lax needs t > 0");
    let n = space.len();
    let mut values = vec![0.0; n];
    for (x, slot) in values.iter_mut().enumerate() {
        let mut best = f64::INFINITY;
        for y in 0..n {
            let d = space.distance(x, y);
            let v = phi0.values[y] + d * d / (2.0 * t);
            if v < best {
                best = v;
            }
        }
        *slot = best;
    }
    Potential { values, time: t }
}

/// The constant of the smoothed nonlocal subsolution drift, assembled from
/// the kernel moments:
/// `C = d^2/M2^2 [ 3/8 M3 + sqrt((M2/d + 3/2 M3)(M4 + 3/2 M5)) + 1/4 (M4 + 3/2 M5) ]`.
#[derive(Debug, Clone, Serialize)]
pub struct HjConstants {
    pub c_drift: f64,
    pub lipschitz_bound: f64,
    pub smoothing: f64,
    pub kernel_scale: f64,
    pub m2: f64,
}

impl HjConstants {
    pub fn assemble(kernel: &RadialKernel, lipschitz_bound: f64, smoothing: f64) -> Result<Self> {
        let d = kernel.dim as f64;
        let m2 = kernel.moment_unscaled(2)?;
        let m3 = kernel.moment_unscaled(3)?;
        let m4 = kernel.moment_unscaled(4)?;
        let m5 = kernel.moment_unscaled(5)?;
        let hi = m4 + 1.5 * m5;
        let c_drift = d * d / (m2 * m2)
            * (0.375 * m3 + ((m2 / d + 1.5 * m3) * hi).sqrt() + 0.25 * hi);
        Ok(HjConstants {
            c_drift,
            lipschitz_bound,
            smoothing,
            kernel_scale: kernel.scale,
            m2,
        })
    }
}

/// The transformed potentials
/// `phi_check_t = 2d/(eps^2 M2) K_s * phi_t - (C A^2/(eps s)) t`.
pub fn nl_hj_subsolution(
    space: &DiscreteSpace,
    kernel: &RadialKernel,
    phi_path: &[Potential],
    constants: &HjConstants,
    laplace: &Convolution,
) -> Vec<Potential> {
    let d = space.dim as f64;
    let eps = kernel.scale;
    let scale = 2.0 * d / (eps * eps * constants.m2);
    let drift = constants.c_drift * constants.lipschitz_bound.powi(2)
        / (eps * constants.smoothing);
    phi_path
        .iter()
        .map(|p| {
            let smoothed = laplace.apply(&p.values);
            Potential {
                values: smoothed.iter().map(|v| scale * v - drift * p.time).collect(),
                time: p.time,
            }
        })
        .collect()
}

/// One evaluation of the smoothed nonlocal Hamilton-Jacobi form at a sampled
/// `(t, mu)`:
/// `int dphi/dt d(K_s*mu) + 1/4 iint (phi(y)-phi(x))^2 theta(K_s*mu) eta dx dy`.
pub fn hj_form(
    space: &DiscreteSpace,
    theta: &Interpolation,
    phi_prev: &Potential,
    phi_next: &Potential,
    phi_mid: &Potential,
    smoothed_mu: &[f64],
) -> f64 {
    let m = space.ref_masses();
    let dt = phi_next.time - phi_prev.time;
    let mut lhs = 0.0;
    for i in 0..space.len() {
        let dphi = (phi_next.values[i] - phi_prev.values[i]) / dt;
        lhs += dphi * smoothed_mu[i] * m[i];
    }
    // Ordered-pair quarter sum equals half the undirected-edge sum.
    for e in space.edges() {
        let grad = phi_mid.values[e.j] - phi_mid.values[e.i];
        let th = theta.eval(smoothed_mu[e.i].max(0.0), smoothed_mu[e.j].max(0.0));
        lhs += 0.5 * grad * grad * th * e.weight * m[e.i] * m[e.j];
    }
    lhs
}

/// Full dual lower-bound certificate of the localization estimate.
#[derive(Debug, Clone, Serialize)]
pub struct HjLowerBoundReport {
    pub w2: f64,
    pub nonlocal_distance: f64,
    pub smoothed_distance: f64,
    pub pairing: f64,
    /// Worst sampled subsolution form value (must be below the slack).
    pub worst_form: f64,
    pub slack_tol: f64,
    /// `W2^2 <= eps^2 M2/(2d) W^2 + (7/4 d R^2 + 8 d R) sqrt(eps)`.
    pub headline_lhs: f64,
    pub headline_rhs: f64,
    pub subsolution_ok: bool,
    pub pairing_ok: bool,
    pub headline_ok: bool,
    pub constants: HjConstants,
}

/// Configuration for the Hamilton-Jacobi dual pipeline.
pub struct HjPipelineConfig {
    pub time_samples: usize,
    pub measure_samples: usize,
    pub solver: SolveConfig,
    pub seed: u64,
}

impl Default for HjPipelineConfig {
    fn default() -> Self {
        HjPipelineConfig {
            time_samples: 32,
            measure_samples: 100,
            solver: SolveConfig::default(),
            seed: 17,
        }
    }
}

/// Runs Kantorovich potential -> Hopf-Lax path -> Laplace smoothing at
/// `s = sqrt(eps)` -> transformed subsolution -> dual pairing, and checks the
/// containment chain against the solver.
#[allow(clippy::too_many_arguments)]
pub fn hj_lower_bound(
    space: &DiscreteSpace,
    kernel: &RadialKernel,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    support_radius: f64,
    nonlocal: &SolveReport,
    config: &HjPipelineConfig,
) -> Result<HjLowerBoundReport> {
    use rand::{Rng, SeedableRng};
    let eps = kernel.scale;
    let s = eps.sqrt();
    let d = space.dim as f64;
    let (w2_val, _) = w2(space, mu0, mu1)?;
    let (phi0, _, gap) = kantorovich_potential(space, mu0, mu1)?;
    if gap > 1e-8 * (1.0 + w2_val) {
        return Err(Error::Solver(format!("duality gap {gap} too large")));
    }
    // Hopf-Lax path at uniform times.
    let t_hj = config.time_samples;
    let mut phis = Vec::with_capacity(t_hj + 1);
    phis.push(Potential {
        values: phi0.values.clone(),
        time: 0.0,
    });
    for k in 1..=t_hj {
        let t = k as f64 / t_hj as f64;
        phis.push(hopf_lax(space, &phi0, t));
    }
    let lip = phis
        .iter()
        .map(|p| p.lipschitz(space, 2.0 * eps.max(space.min_spacing() * 4.0)))
        .fold(0.0, f64::max);
    let a_bound = lip.max(support_radius);
    let constants = HjConstants::assemble(kernel, a_bound, s)?;
    let laplace = SmoothingKernel::laplace(space.dim, s).discretize(space)?;
    let checks = nl_hj_subsolution(space, kernel, &phis, &constants, &laplace);

    // Battery of sampled measures: Diracs, uniform, random.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut measures: Vec<Density> = vec![Density::uniform(space), mu0.clone(), mu1.clone()];
    for q in 0..7 {
        measures.push(Density::dirac(space, (q * space.len()) / 7));
    }
    while measures.len() < config.measure_samples.max(4) {
        let mut v: Vec<f64> = (0..space.len()).map(|_| rng.gen::<f64>()).collect();
        let mass: f64 = v
            .iter()
            .zip(space.ref_masses())
            .map(|(a, m)| a * m)
            .sum();
        for x in v.iter_mut() {
            *x /= mass;
        }
        measures.push(Density::new(v)?);
    }

    let phi_scale = checks
        .iter()
        .flat_map(|p| p.values.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let h = space.min_spacing();
    let slack_tol = 1e-6 + 10.0 * h * phi_scale;
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 1..(t_hj) {
        // Spread the measure battery across interior sample times.
        for (qi, q) in measures.iter().enumerate() {
            if (k + qi) % ((t_hj - 1).max(1)) != 0 && measures.len() > 8 {
                // Sample a deterministic subset to keep the battery near the
                // configured size.
                continue;
            }
            let smoothed = laplace.apply(&q.values);
            let form = hj_form(
                space,
                theta,
                &checks[k - 1],
                &checks[k + 1],
                &checks[k],
                &smoothed,
            );
            worst = worst.max(form);
        }
    }
    let subsolution_ok = worst <= slack_tol;

    // Dual pairing against the smoothed endpoints.
    let m = space.ref_masses();
    let pair = |phi: &Potential, mu: &Density| -> f64 {
        let sm = laplace.apply(&mu.values);
        phi.values
            .iter()
            .zip(&sm)
            .zip(m)
            .map(|((f, v), mm)| f * v * mm)
            .sum()
    };
    let pairing = pair(&checks[t_hj], mu1) - pair(&checks[0], mu0);
    let smoothed_rep = solve_smoothed(space, theta, mu0, mu1, &laplace, &config.solver)?;
    let pairing_ok = pairing <= 0.5 * smoothed_rep.objective + 1e-4 * (1.0 + smoothed_rep.objective);

    let m2 = constants.m2;
    let headline_lhs = w2_val * w2_val;
    let r = support_radius;
    let headline_rhs = eps * eps * m2 / (2.0 * d) * nonlocal.objective
        + (1.75 * d * r * r + 8.0 * d * r) * eps.sqrt();
    let headline_ok = headline_lhs <= headline_rhs + 1e-9;
    Ok(HjLowerBoundReport {
        w2: w2_val,
        nonlocal_distance: nonlocal.distance,
        smoothed_distance: smoothed_rep.distance,
        pairing,
        worst_form: worst,
        slack_tol,
        headline_lhs,
        headline_rhs,
        subsolution_ok,
        pairing_ok,
        headline_ok,
        constants,
    })
}

/// Verifies `W2(mu, k_s * mu) <= sqrt(M2(k)) s` against the exact distance
/// (the product coupling certifies the bound).
pub fn convolution_w2_estimate(
    space: &DiscreteSpace,
    mu: &Density,
    smoother: &SmoothingKernel,
    conv: &Convolution,
) -> Result<(f64, f64)> {
    let smoothed = Density::new(conv.apply(&mu.values).iter().map(|v| v.max(0.0)).collect())?;
    let (exact, _) = w2(space, mu, &smoothed)?;
    let bound = smoother.second_moment()?.sqrt();
    Ok((exact, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn line_space(n: usize) -> DiscreteSpace {
        let k = RadialKernel::indicator(1, 0.4);
        DiscreteSpace::grid(1, 1.0, n, &k).unwrap()
    }

    #[test]
    fn w2_between_diracs() {
        let s = DiscreteSpace::two_point(0.5).unwrap();
        let a = Density::dirac(&s, 0);
        let b = Density::dirac(&s, 1);
        let (d, _) = w2(&s, &a, &b).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w2_split_mass() {
        // mu = (delta_0 + delta_1)/2, nu = delta_{1/2}: W2 = 1/2.
        let k = RadialKernel::indicator(1, 2.0);
        let s = DiscreteSpace::from_points(
            1,
            vec![vec![0.0], vec![0.5], vec![1.0]],
            vec![1.0, 1.0, 1.0],
            &k,
        )
        .unwrap();
        let mu = Density::new(vec![0.5, 0.0, 0.5]).unwrap();
        let nu = Density::new(vec![0.0, 1.0, 0.0]).unwrap();
        let (d, plan) = w2(&s, &mu, &nu).unwrap();
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-12);
        // Marginals must match.
        let mut row = vec![0.0; 3];
        let mut col = vec![0.0; 3];
        for &(i, j, mass) in &plan.pairs {
            row[i] += mass;
            col[j] += mass;
        }
        assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(col[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn simplex_matches_quantile_formula_1d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let s = line_space(50);
        for _ in 0..20 {
            let mut a: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
            let mut b: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|v| *v /= sa * 0.02);
            b.iter_mut().for_each(|v| *v /= sb * 0.02);
            let mu = Density::new(a.clone()).unwrap();
            let nu = Density::new(b.clone()).unwrap();
            let (d2, _) = w2(&s, &mu, &nu).unwrap();
            let atoms = |v: &[f64]| -> Vec<(f64, f64)> {
                v.iter()
                    .enumerate()
                    .map(|(i, &x)| (s.point(i)[0], x * s.ref_masses()[i]))
                    .collect()
            };
            let q2 = wp_quantile_1d(&atoms(&a), &atoms(&b), 2.0).sqrt();
            assert_abs_diff_eq!(d2, q2, epsilon = 1e-8);
            let d1 = w1(&s, &mu, &nu).unwrap();
            let q1 = wp_quantile_1d(&atoms(&a), &atoms(&b), 1.0);
            assert_abs_diff_eq!(d1, q1, epsilon = 1e-8);
        }
    }

    #[test]
    fn potentials_close_duality_gap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let s = line_space(40);
        let mut a: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let mut b: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        a.iter_mut().for_each(|v| *v /= sa * 0.025);
        b.iter_mut().for_each(|v| *v /= sb * 0.025);
        let mu = Density::new(a).unwrap();
        let nu = Density::new(b).unwrap();
        let (w2v, _) = w2(&s, &mu, &nu).unwrap();
        let (phi0, phi1, gap) = kantorovich_potential(&s, &mu, &nu).unwrap();
        assert!(gap <= 1e-8, "gap {gap}");
        // Admissibility: phi1(y) - phi0(x) <= c(x,y).
        for i in 0..s.len() {
            for j in 0..s.len() {
                let c = 0.5 * s.distance(i, j).powi(2);
                assert!(phi1.values[j] - phi0.values[i] <= c + 1e-10);
            }
        }
        // Lipschitz bound by the support diameter.
        let lip = phi0.lipschitz(&s, f64::INFINITY);
        assert!(lip <= s.diameter() + 1e-9, "lip {lip}");
        let _ = w2v;
    }

    #[test]
    fn potentials_for_dirac_pair() {
        let k = RadialKernel::indicator(1, 2.0);
        let s = DiscreteSpace::from_points(1, vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], &k)
            .unwrap();
        let mu = Density::dirac(&s, 0);
        let nu = Density::dirac(&s, 1);
        let (phi0, phi1, _) = kantorovich_potential(&s, &mu, &nu).unwrap();
        let dual = phi1.values[1] * 1.0 - phi0.values[0] * 1.0;
        assert_abs_diff_eq!(dual, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn hopf_lax_basics() {
        let s = line_space(101);
        let zero = Potential {
            values: vec![0.0; s.len()],
            time: 0.0,
        };
        let out = hopf_lax(&s, &zero, 0.5);
        assert!(out.values.iter().all(|&v| v.abs() < 1e-14));

        // phi0(x) = x evolves to x - t/2 in the interior.
        let lin = Potential {
            values: (0..s.len()).map(|i| s.point(i)[0]).collect(),
            time: 0.0,
        };
        let t = 0.2;
        let out = hopf_lax(&s, &lin, t);
        for i in 30..70 {
            let x = s.point(i)[0];
            assert_abs_diff_eq!(out.values[i], x - t / 2.0, epsilon = 1e-3);
        }
        // Lipschitz non-expansive.
        let lip0 = lin.lipschitz(&s, 0.1);
        let lip1 = out.lipschitz(&s, 0.1);
        assert!(lip1 <= lip0 + 1e-9);

        // phi0(x) = |x - 1/2|: analytic Hopf-Lax min(|x-1/2| - t/2, (x-1/2)^2/(2t)).
        let vee = Potential {
            values: (0..s.len()).map(|i| (s.point(i)[0] - 0.5).abs()).collect(),
            time: 0.0,
        };
        let out = hopf_lax(&s, &vee, t);
        let h = 0.01;
        for i in 20..80 {
            let x: f64 = s.point(i)[0] - 0.5;
            let analytic = if x.abs() >= t {
                x.abs() - t / 2.0
            } else {
                x * x / (2.0 * t)
            };
            assert!(
                (out.values[i] - analytic).abs() <= 2.0 * h,
                "x={x}: {} vs {analytic}",
                out.values[i]
            );
        }
        // Semigroup property up to discretization slack.
        let two_step = hopf_lax(&s, &hopf_lax(&s, &vee, 0.1), 0.1);
        let one_step = hopf_lax(&s, &vee, 0.2);
        for i in 0..s.len() {
            assert!(two_step.values[i] >= one_step.values[i] - 1e-9);
        }
    }

    #[test]
    fn laplace_gradient_bounds() {
        // |grad(K_s * phi)| <= |grad phi| and |D2(K_s * phi)| <= |grad phi| / s.
        let s = line_space(101);
        let h = 0.01;
        let sscale = 0.15;
        let conv = SmoothingKernel::laplace(1, sscale).discretize(&s).unwrap();
        let phi: Vec<f64> = (0..s.len())
            .map(|i| (2.5 * std::f64::consts::PI * s.point(i)[0]).sin() * 0.3)
            .collect();
        let sm = conv.apply(&phi);
        let grad = |v: &[f64], i: usize| (v[i + 1] - v[i - 1]) / (2.0 * h);
        let second = |v: &[f64], i: usize| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        let max_grad_phi = (1..s.len() - 1)
            .map(|i| grad(&phi, i).abs())
            .fold(0.0f64, f64::max);
        for i in 10..s.len() - 10 {
            assert!(grad(&sm, i).abs() <= max_grad_phi * (1.0 + 1e-6) + 1e-12);
            assert!(
                second(&sm, i).abs() <= max_grad_phi / sscale * 1.15,
                "second derivative bound at {i}: {} vs {}",
                second(&sm, i).abs(),
                max_grad_phi / sscale
            );
        }
    }

    #[test]
    fn w2_contraction_under_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s = line_space(60);
        let conv = SmoothingKernel::laplace(1, 0.1).discretize(&s).unwrap();
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Density {
            let mut v: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
            let mass: f64 = v.iter().zip(s.ref_masses()).map(|(a, m)| a * m).sum();
            v.iter_mut().for_each(|x| *x /= mass);
            Density::new(v).unwrap()
        };
        for _ in 0..5 {
            let mu0 = mk(&mut rng);
            let mu1 = mk(&mut rng);
            let (d, _) = w2(&s, &mu0, &mu1).unwrap();
            let sm0 = Density::new(conv.apply(&mu0.values)).unwrap();
            let sm1 = Density::new(conv.apply(&mu1.values)).unwrap();
            let (ds, _) = w2(&s, &sm0, &sm1).unwrap();
            assert!(ds <= d + 1e-8, "{ds} vs {d}");
        }
    }

    #[test]
    fn convolution_w2_estimates_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = line_space(60);
        let mut v: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        let mass: f64 = v.iter().zip(s.ref_masses()).map(|(a, m)| a * m).sum();
        v.iter_mut().for_each(|x| *x /= mass);
        let mu = Density::new(v).unwrap();
        // Laplace with s = 0.1: bound sqrt(2) * 0.1 in d = 1.
        let lap = SmoothingKernel::laplace(1, 0.1);
        let conv = lap.discretize(&s).unwrap();
        let (exact, bound) = convolution_w2_estimate(&s, &mu, &lap, &conv).unwrap();
        assert_abs_diff_eq!(bound, laplace_moment(1, 2).sqrt() * 0.1, epsilon = 1e-12);
        assert!(exact <= bound, "{exact} vs {bound}");
        // Zeta of the indicator with eps = 0.2.
        let eta = RadialKernel::indicator(1, 0.2);
        let zeta = eta.zeta_profile().unwrap();
        let zconv = zeta.discretize(&s).unwrap();
        let (exact, bound) = convolution_w2_estimate(&s, &mu, &zeta, &zconv).unwrap();
        assert!(exact <= bound, "{exact} vs {bound}");
    }
}
