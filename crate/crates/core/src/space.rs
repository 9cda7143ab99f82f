//! Finite discretizations of `R^d`: point clouds with reference masses and a
//! kernel-weighted edge set, plus densities, antisymmetric fluxes, and
//! time-staggered paths.

use crate::kernels::RadialKernel;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// An undirected weighted edge `(i, j, eta_ij)` with `i < j`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// A finite point cloud with reference measure `m` and edge weights
/// `eta_ij = eta_eps(|x_i - x_j|)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteSpace {
    pub dim: usize,
    /// Flattened coordinates, `dim` entries per point.
    coords: Vec<f64>,
    masses: Vec<f64>,
    edges: Vec<Edge>,
    /// Per-node offsets into `incidence`.
    adj_offsets: Vec<usize>,
    /// Edge indices incident to each node, grouped by node.
    incidence: Vec<usize>,
    diameter: f64,
    min_spacing: f64,
    /// `C = max_i sum_j eta_ij m_j`.
    c_const: f64,
    /// `C~ = max_i sum_j |x_i - x_j|^2 eta_ij m_j`.
    c_tilde: f64,
    /// Per-node `sum_j eta_ij m_j`.
    node_eta_mass: Vec<f64>,
}

impl DiscreteSpace {
    /// Builds a space from explicit points and masses, assembling all edges
    /// with positive kernel weight (brute-force pair scan).
    pub fn from_points(
        dim: usize,
        points: Vec<Vec<f64>>,
        masses: Vec<f64>,
        kernel: &RadialKernel,
    ) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::InvalidSpace("need at least two points".into()));
        }
        if masses.len() != n {
            return Err(Error::InvalidSpace("masses/points length mismatch".into()));
        }
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidSpace("masses must be positive".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidSpace("point dimension mismatch".into()));
        }
        if kernel.dim != dim {
            return Err(Error::InvalidSpace(format!(
                "kernel dimension {} does not match space dimension {dim}",
                kernel.dim
            )));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for p in &points {
            coords.extend_from_slice(p);
        }
        let dist = |a: usize, b: usize| -> f64 {
            coords[a * dim..(a + 1) * dim]
                .iter()
                .zip(&coords[b * dim..(b + 1) * dim])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut edges = Vec::new();
        let mut diameter = 0.0f64;
        let mut min_spacing = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let r = dist(i, j);
                if !(r > 0.0) {
                    return Err(Error::InvalidSpace(format!(
                        "duplicate points {i} and {j}"
                    )));
                }
                diameter = diameter.max(r);
                min_spacing = min_spacing.min(r);
                let w = kernel.eval(r);
                if w > 0.0 {
                    edges.push(Edge { i, j, weight: w });
                }
                if edges.len() > 100_000_000 {
                    return Err(Error::SizeLimit("more than 1e8 edges".into()));
                }
            }
        }
        if edges.is_empty() {
            return Err(Error::InvalidSpace(
                "kernel support produces no edges".into(),
            ));
        }
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut adj_offsets = vec![0usize; n + 1];
        for i in 0..n {
            adj_offsets[i + 1] = adj_offsets[i] + degree[i];
        }
        let mut incidence = vec![0usize; adj_offsets[n]];
        let mut cursor = adj_offsets.clone();
        for (idx, e) in edges.iter().enumerate() {
            incidence[cursor[e.i]] = idx;
            cursor[e.i] += 1;
            incidence[cursor[e.j]] = idx;
            cursor[e.j] += 1;
        }
        let mut node_eta_mass = vec![0.0; n];
        let mut c_tilde = 0.0f64;
        for i in 0..n {
            let mut c_i = 0.0;
            let mut ct_i = 0.0;
            for &eidx in &incidence[adj_offsets[i]..adj_offsets[i + 1]] {
                let e = edges[eidx];
                let other = if e.i == i { e.j } else { e.i };
                let r = dist(i, other);
                c_i += e.weight * masses[other];
                ct_i += r * r * e.weight * masses[other];
            }
            node_eta_mass[i] = c_i;
            c_tilde = c_tilde.max(ct_i);
        }
        let c_const = node_eta_mass.iter().cloned().fold(0.0, f64::max);
        Ok(DiscreteSpace {
            dim,
            coords,
            masses,
            edges,
            adj_offsets,
            incidence,
            diameter,
            min_spacing,
            c_const,
            c_tilde,
            node_eta_mass,
        })
    }

    /// Uniform grid on `[0, extent]^d` with `n_per_axis` nodes per axis and
    /// Lebesgue cell volumes as reference masses.
    pub fn grid(dim: usize, extent: f64, n_per_axis: usize, kernel: &RadialKernel) -> Result<Self> {
        if n_per_axis < 2 {
            return Err(Error::InvalidSpace("need n_per_axis >= 2".into()));
        }
        let h = extent / n_per_axis as f64;
        let n = n_per_axis.pow(dim as u32);
        if n > 2_000_000 {
            return Err(Error::SizeLimit("grid too large".into()));
        }
        let mut points = Vec::with_capacity(n);
        for flat in 0..n {
            let mut p = Vec::with_capacity(dim);
            let mut rest = flat;
            for _ in 0..dim {
                let k = rest % n_per_axis;
                rest /= n_per_axis;
                p.push((k as f64 + 0.5) * h);
            }
            points.push(p);
        }
        let cell = h.powi(dim as i32);
        Self::from_points(dim, points, vec![cell; n], kernel)
    }

    /// The two-point space: nodes at distance 1, unit masses, one edge of
    /// weight `w`.
    pub fn two_point(w: f64) -> Result<Self> {
        if !(w > 0.0) {
            return Err(Error::InvalidSpace("edge weight must be positive".into()));
        }
        let custom = RadialKernel::new(
            crate::kernels::KernelFamily::Custom {
                table: vec![(1.0, w)],
            },
            1,
            1.0,
        )?;
        Self::from_points(1, vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], &custom)
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ref_masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// `C = max_i sum_j eta_ij m_j`.
    pub fn c_const(&self) -> f64 {
        self.c_const
    }

    /// `C~ = max_i sum_j |x_i - x_j|^2 eta_ij m_j`.
    pub fn c_tilde(&self) -> f64 {
        self.c_tilde
    }

    /// Node-local `sum_j eta_ij m_j`.
    pub fn node_eta_mass(&self, i: usize) -> f64 {
        self.node_eta_mass[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Edge indices incident to node `i`.
    pub fn incident_edges(&self, i: usize) -> &[usize] {
        &self.incidence[self.adj_offsets[i]..self.adj_offsets[i + 1]]
    }

    /// Total reference volume `sum_i m_i`.
    pub fn total_volume(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Nodes within distance `radius` of node `center`.
    pub fn ball(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.distance(center, i) <= radius)
            .collect()
    }
}

/// A density with respect to the reference masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Density {
    pub values: Vec<f64>,
}

impl Density {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidSpace(
                "density values must be finite and nonnegative".into(),
            ));
        }
        Ok(Density { values })
    }

    pub fn uniform(space: &DiscreteSpace) -> Self {
        let v = 1.0 / space.total_volume();
        Density {
            values: vec![v; space.len()],
        }
    }

    /// Dirac at node `i`: all mass concentrated on one node (`1 / m_i`).
    pub fn dirac(space: &DiscreteSpace, i: usize) -> Self {
        let mut values = vec![0.0; space.len()];
        values[i] = 1.0 / space.ref_masses()[i];
        Density { values }
    }

    pub fn total_mass(&self, space: &DiscreteSpace) -> f64 {
        self.values
            .iter()
            .zip(space.ref_masses())
            .map(|(v, m)| v * m)
            .sum()
    }

    /// Mass carried by a set of nodes.
    pub fn mass_on(&self, space: &DiscreteSpace, nodes: &[usize]) -> f64 {
        nodes
            .iter()
            .map(|&i| self.values[i] * space.ref_masses()[i])
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Density {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Normalizes nonnegative nodal values into a probability density.
pub fn normalized_density(space: &DiscreteSpace, values: Vec<f64>) -> Result<Density> {
    let mass: f64 = values
        .iter()
        .zip(space.ref_masses())
        .map(|(v, m)| v * m)
        .sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidSpace("measure has no mass".into()));
    }
    Density::new(values.into_iter().map(|v| v / mass).collect())
}

/// Gaussian-bump probability density `exp(-|x - center|^2 / width^2)`.
pub fn gaussian_bump(space: &DiscreteSpace, center: &[f64], width: f64) -> Result<Density> {
    let values = (0..space.len())
        .map(|i| {
            let r2: f64 = space
                .point(i)
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-r2 / (width * width)).exp()
        })
        .collect();
    normalized_density(space, values)
}

/// Uniform probability density on the discrete ball around `center`.
pub fn uniform_ball(space: &DiscreteSpace, center: &[f64], radius: f64) -> Result<Density> {
    let values = (0..space.len())
        .map(|i| {
            let r2: f64 = space
                .point(i)
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if r2.sqrt() <= radius {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    normalized_density(space, values)
}

/// Seeded random probability density (uniform i.i.d. nodal values).
pub fn random_density(space: &DiscreteSpace, rng: &mut impl rand::Rng) -> Density {
    let values: Vec<f64> = (0..space.len()).map(|_| rng.gen::<f64>()).collect();
    normalized_density(space, values).expect("positive values have mass")
}

/// Total variation distance `1/2 sum_i |a_i - b_i| m_i` of equal-mass
/// densities.
pub fn tv_distance(space: &DiscreteSpace, a: &Density, b: &Density) -> Result<f64> {
    let (ma, mb) = (a.total_mass(space), b.total_mass(space));
    if (ma - mb).abs() > 1e-9 * ma.abs().max(1.0) {
        return Err(Error::MassMismatch(ma, mb));
    }
    Ok(0.5
        * a.values
            .iter()
            .zip(&b.values)
            .zip(space.ref_masses())
            .map(|((x, y), m)| (x - y).abs() * m)
            .sum::<f64>())
}

/// Pointwise minimum of two densities (the overlap measure).
pub fn min_measure(a: &Density, b: &Density) -> Density {
    Density {
        values: a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.min(*y))
            .collect(),
    }
}

/// An antisymmetric flux: one value per undirected edge, oriented `i -> j`
/// with `i < j` (so `j(i,j) = values[e]`, `j(j,i) = -values[e]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Flux {
    pub values: Vec<f64>,
}

impl Flux {
    pub fn zero(space: &DiscreteSpace) -> Self {
        Flux {
            values: vec![0.0; space.edges().len()],
        }
    }
}

/// A time-staggered path: densities at `T + 1` uniform time nodes, fluxes at
/// the `T` midpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Path {
    pub densities: Vec<Density>,
    pub fluxes: Vec<Flux>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.fluxes.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tiny_grid_edges_and_masses() {
        let k = RadialKernel::indicator(1, 1.0);
        let s = DiscreteSpace::grid(1, 1.0, 2, &k).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.edges().len(), 1);
        assert_abs_diff_eq!(s.ref_masses()[0], 0.5);
        assert_abs_diff_eq!(s.ref_masses()[1], 0.5);
        assert_abs_diff_eq!(s.total_volume(), 1.0);
    }

    #[test]
    fn grid_neighbor_counts() {
        let k = RadialKernel::indicator(1, 0.1);
        let s = DiscreteSpace::grid(1, 1.0, 101, &k).unwrap();
        // Interior nodes see every node within distance 0.1 (spacing ~0.0099).
        let mid = 50;
        let neighbors = s.incident_edges(mid).len();
        assert!((18..=22).contains(&neighbors), "got {neighbors}");
    }

    #[test]
    fn grid_isotropy_of_c_const() {
        let k = RadialKernel::indicator(2, 0.3);
        let s = DiscreteSpace::grid(2, 1.0, 10, &k).unwrap();
        // All deep-interior nodes share the same eta-mass by symmetry.
        let h = 0.1;
        let interior: Vec<usize> = (0..s.len())
            .filter(|&i| {
                s.point(i)
                    .iter()
                    .all(|&x| x > 0.3 + h && x < 0.7 - h)
            })
            .collect();
        assert!(!interior.is_empty());
        let v0 = s.node_eta_mass(interior[0]);
        for &i in &interior {
            assert_abs_diff_eq!(s.node_eta_mass(i), v0, epsilon = 1e-9 * v0);
        }
        assert!(s.c_const().is_finite() && s.c_tilde().is_finite());
    }

    #[test]
    fn two_point_constants() {
        let s = DiscreteSpace::two_point(0.5).unwrap();
        assert_abs_diff_eq!(s.c_const(), 0.5);
        assert_abs_diff_eq!(s.c_tilde(), 0.5);
        assert_abs_diff_eq!(s.diameter(), 1.0);
    }

    #[test]
    fn tv_and_min_measure() {
        let s = DiscreteSpace::two_point(0.5).unwrap();
        let d0 = Density::dirac(&s, 0);
        let d1 = Density::dirac(&s, 1);
        assert_abs_diff_eq!(tv_distance(&s, &d0, &d0).unwrap(), 0.0);
        assert_abs_diff_eq!(tv_distance(&s, &d0, &d1).unwrap(), 1.0);
        let half = Density::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(tv_distance(&s, &half, &d0).unwrap(), 0.5);
        let mm = min_measure(&d0, &d1);
        assert!(mm.values.iter().all(|&v| v == 0.0));
        let mm = min_measure(
            &Density::new(vec![0.2, 0.8]).unwrap(),
            &Density::new(vec![0.5, 0.5]).unwrap(),
        );
        assert_eq!(mm.values, vec![0.2, 0.5]);
    }

    #[test]
    fn mass_mismatch_rejected() {
        let s = DiscreteSpace::two_point(0.5).unwrap();
        let a = Density::new(vec![1.0, 0.0]).unwrap();
        let b = Density::new(vec![1.0, 1.0]).unwrap();
        assert!(tv_distance(&s, &a, &b).is_err());
    }

    #[test]
    fn edge_assembly_matches_brute_force() {
        let k = RadialKernel::indicator(1, 0.25);
        let s = DiscreteSpace::grid(1, 1.0, 40, &k).unwrap();
        let mut count = 0;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                if k.eval(s.distance(i, j)) > 0.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, s.edges().len());
        // Cached constants equal brute-force recomputation.
        let mut c = 0.0f64;
        let mut ct = 0.0f64;
        for i in 0..s.len() {
            let mut ci = 0.0;
            let mut cti = 0.0;
            for j in 0..s.len() {
                if i == j {
                    continue;
                }
                let r = s.distance(i, j);
                let w = k.eval(r);
                ci += w * s.ref_masses()[j];
                cti += r * r * w * s.ref_masses()[j];
            }
            c = c.max(ci);
            ct = ct.max(cti);
        }
        assert_abs_diff_eq!(c, s.c_const(), epsilon = 1e-12 * c);
        assert_abs_diff_eq!(ct, s.c_tilde(), epsilon = 1e-12 * ct.max(1.0));
    }
}
