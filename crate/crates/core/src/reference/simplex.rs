//! Transportation network simplex with Bland's anti-cycling rule.
//!
//! The bipartite problem between the supports of two equal-mass densities is
//! solved exactly: basis = spanning tree of the bipartite graph, northwest
//! corner start, lowest-index entering arc among negative reduced costs,
//! lowest-index leaving arc among minimum-ratio candidates.

use crate::space::{Density, DiscreteSpace};
use crate::{Error, Result};
use serde::Serialize;

/// An optimal transport plan with its dual potentials on the supports.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    /// `(space node i, space node j, mass)` entries of the optimal plan.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Optimal total cost.
    pub cost: f64,
    /// Source duals, indexed like `support_mu`.
    pub u: Vec<f64>,
    /// Sink duals, indexed like `support_nu`.
    pub v: Vec<f64>,
    /// `(space node, lp index)` for the source side.
    pub support_mu: Vec<(usize, usize)>,
    /// `(space node, lp index)` for the sink side.
    pub support_nu: Vec<(usize, usize)>,
}

struct Basis {
    /// Basic arcs as (source, sink, flow).
    arcs: Vec<(usize, usize, f64)>,
}

pub fn solve_transport(
    space: &DiscreteSpace,
    mu: &Density,
    nu: &Density,
    cost: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<TransportPlan> {
    let m_ref = space.ref_masses();
    let mass_mu: f64 = mu.total_mass(space);
    let mass_nu: f64 = nu.total_mass(space);
    if (mass_mu - mass_nu).abs() > 1e-9 * mass_mu.max(1.0) {
        return Err(Error::MassMismatch(mass_mu, mass_nu));
    }
    let cutoff = 1e-15 * mass_mu;
    let sources: Vec<usize> = (0..space.len())
        .filter(|&i| mu.values[i] * m_ref[i] > cutoff)
        .collect();
    let sinks: Vec<usize> = (0..space.len())
        .filter(|&i| nu.values[i] * m_ref[i] > cutoff)
        .collect();
    let (ns, nt) = (sources.len(), sinks.len());
    if ns == 0 || nt == 0 {
        return Err(Error::Precondition("empty support".into()));
    }
    if ns > 2000 || nt > 2000 {
        return Err(Error::SizeLimit(format!(
            "transport supports {ns} x {nt} exceed the exact-LP limit"
        )));
    }
    let supply: Vec<f64> = sources.iter().map(|&i| mu.values[i] * m_ref[i]).collect();
    let mut demand: Vec<f64> = sinks.iter().map(|&i| nu.values[i] * m_ref[i]).collect();
    // Exact mass balance for the simplex.
    let (su, de): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    let fix = su / de;
    demand.iter_mut().for_each(|d| *d *= fix);
    let costs: Vec<f64> = {
        let mut c = vec![0.0; ns * nt];
        for (a, &i) in sources.iter().enumerate() {
            for (b, &j) in sinks.iter().enumerate() {
                c[a * nt + b] = cost(space.point(i), space.point(j));
            }
        }
        c
    };
    let cost_scale = costs.iter().fold(0.0f64, |m, &c| m.max(c.abs())).max(1e-300);

    // Northwest-corner initial basis.
    let mut basis = Basis { arcs: Vec::with_capacity(ns + nt - 1) };
    {
        let (mut a, mut b) = (0usize, 0usize);
        let mut s = supply.clone();
        let mut d = demand.clone();
        while a < ns && b < nt {
            let f = s[a].min(d[b]);
            basis.arcs.push((a, b, f));
            s[a] -= f;
            d[b] -= f;
            if a + 1 == ns && b + 1 == nt {
                break;
            }
            if s[a] <= d[b] {
                a += 1;
            } else {
                b += 1;
            }
        }
        // Degenerate NW paths can terminate early; pad the spanning tree.
        while basis.arcs.len() < ns + nt - 1 {
            // Attach any missing node through a zero-flow arc.
            let mut have_src = vec![false; ns];
            let mut have_snk = vec![false; nt];
            for &(i, j, _) in &basis.arcs {
                have_src[i] = true;
                have_snk[j] = true;
            }
            if let Some(i) = (0..ns).find(|&i| !have_src[i]) {
                basis.arcs.push((i, 0, 0.0));
            } else if let Some(j) = (0..nt).find(|&j| !have_snk[j]) {
                basis.arcs.push((0, j, 0.0));
            } else {
                break;
            }
        }
    }

    let n_nodes = ns + nt;
    let max_pivots = 50 * (ns * nt).max(1000);
    let mut u = vec![0.0; ns];
    let mut v = vec![0.0; nt];
    for _pivot in 0..max_pivots {
        // Recompute duals by walking the basis tree from source 0.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        for (idx, &(i, j, _)) in basis.arcs.iter().enumerate() {
            adj[i].push((ns + j, idx));
            adj[ns + j].push((i, idx));
        }
        let mut seen = vec![false; n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &(other, aidx) in &adj[node] {
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                let (i, j, _) = basis.arcs[aidx];
                if other >= ns {
                    v[other - ns] = costs[i * nt + (other - ns)] - u[i];
                } else {
                    u[other] = costs[other * nt + j] - v[j];
                }
                stack.push(other);
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Solver("transport basis lost connectivity".into()));
        }
        // Entering arc: lowest index with negative reduced cost (Bland).
        let tol = 1e-13 * cost_scale;
        let mut entering: Option<(usize, usize)> = None;
        'outer: for a in 0..ns {
            for b in 0..nt {
                if costs[a * nt + b] - u[a] - v[b] < -tol {
                    entering = Some((a, b));
                    break 'outer;
                }
            }
        }
        let Some((ea, eb)) = entering else {
            // Optimal.
            let pairs: Vec<(usize, usize, f64)> = basis
                .arcs
                .iter()
                .filter(|&&(_, _, f)| f > 0.0)
                .map(|&(i, j, f)| (sources[i], sinks[j], f))
                .collect();
            let total: f64 = basis
                .arcs
                .iter()
                .map(|&(i, j, f)| f * costs[i * nt + j])
                .sum();
            return Ok(TransportPlan {
                pairs,
                cost: total,
                u,
                v,
                support_mu: sources.iter().cloned().zip(0..).map(|(n, k)| (n, k)).collect(),
                support_nu: sinks.iter().cloned().zip(0..).map(|(n, k)| (n, k)).collect(),
            });
        };
        // Cycle: tree path from source ea to sink eb.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n_nodes];
        let mut seen = vec![false; n_nodes];
        let mut stack = vec![ea];
        seen[ea] = true;
        while let Some(node) = stack.pop() {
            if node == ns + eb {
                break;
            }
            for &(other, aidx) in &adj[node] {
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some((node, aidx));
                    stack.push(other);
                }
            }
        }
        // Walk back from sink eb collecting the path arcs with orientation:
        // flow on the entering arc increases by delta; path arcs alternate.
        let mut path: Vec<(usize, bool)> = Vec::new(); // (arc index, decreases?)
        let mut node = ns + eb;
        while node != ea {
            let (prev, aidx) = parent[node].ok_or_else(|| {
                Error::Solver("transport basis cycle search failed".into())
            })?;
            let (i, _j, _) = basis.arcs[aidx];
            // Orientation: traversing from prev to node. A basis arc (i, j)
            // carries flow from source i to sink j. Moving source -> sink
            // along the path direction means this arc's flow DEcreases when
            // the cycle pushes mass the opposite way. Work it out by parity:
            // the entering arc sends mass ea -> eb; following the tree path
            // eb -> ... -> ea, arcs traversed sink->source decrease.
            let from_source = prev == i;
            // path is collected from eb side toward ea; direction of traversal
            // in cycle order is node -> prev.
            path.push((aidx, from_source));
            node = prev;
        }
        // Determine delta = min flow among decreasing arcs; Bland tie-break on
        // lowest arc index.
        let mut delta = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for &(aidx, decreases) in &path {
            if decreases {
                let f = basis.arcs[aidx].2;
                if f < delta - 1e-300 || (f <= delta && leave.map_or(true, |l| aidx < l)) {
                    if f < delta {
                        delta = f;
                        leave = Some(aidx);
                    } else if Some(aidx) < leave {
                        leave = Some(aidx);
                    }
                }
            }
        }
        let Some(leave_idx) = leave else {
            return Err(Error::Solver("unbounded transport pivot".into()));
        };
        for &(aidx, decreases) in &path {
            if decreases {
                basis.arcs[aidx].2 -= delta;
            } else {
                basis.arcs[aidx].2 += delta;
            }
        }
        basis.arcs[leave_idx] = (ea, eb, delta);
    }
    Err(Error::Solver("transport simplex exceeded pivot budget".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RadialKernel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tiny_exact_case() {
        let k = RadialKernel::indicator(1, 5.0);
        let s = DiscreteSpace::from_points(
            1,
            vec![vec![0.0], vec![1.0], vec![3.0]],
            vec![1.0, 1.0, 1.0],
            &k,
        )
        .unwrap();
        let mu = Density::new(vec![0.6, 0.4, 0.0]).unwrap();
        let nu = Density::new(vec![0.0, 0.0, 1.0]).unwrap();
        let plan = solve_transport(&s, &mu, &nu, |x, y| (x[0] - y[0]).abs()).unwrap();
        // cost = 0.6*3 + 0.4*2 = 2.6
        assert_abs_diff_eq!(plan.cost, 2.6, epsilon = 1e-12);
    }

    #[test]
    fn reduced_costs_nonnegative_at_optimum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let k = RadialKernel::indicator(1, 2.0);
        let s = DiscreteSpace::grid(1, 1.0, 30, &k).unwrap();
        let mut a: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let mut b: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        a.iter_mut().for_each(|v| *v /= sa / 30.0);
        b.iter_mut().for_each(|v| *v /= sb / 30.0);
        let mu = Density::new(a).unwrap();
        let nu = Density::new(b).unwrap();
        let plan = solve_transport(&s, &mu, &nu, |x, y| {
            (x[0] - y[0]) * (x[0] - y[0])
        })
        .unwrap();
        for (ai, &(ni, _)) in plan.support_mu.iter().enumerate() {
            for (bi, &(nj, _)) in plan.support_nu.iter().enumerate() {
                let c = (s.point(ni)[0] - s.point(nj)[0]).powi(2);
                assert!(
                    c - plan.u[ai] - plan.v[bi] >= -1e-10,
                    "negative reduced cost at ({ai},{bi})"
                );
            }
        }
    }
}
