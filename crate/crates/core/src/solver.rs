//! Convex splitting solver for the nonlocal Wasserstein distance.
//!
//! The staggered problem minimizes `sum_k dt * A(rho_{k+1/2}, j_{k+1/2})`
//! over densities at time nodes and antisymmetric edge fluxes at midpoints,
//! subject to the discrete nonlocal continuity equation and the endpoint
//! constraints. The objective is made separable by duplicating the midpoint
//! densities per edge (`a_e`, `b_e`) with linear consensus constraints; a
//! Douglas-Rachford iteration then alternates the per-edge proximal step of
//! `j^2 / theta(a, b)` (a damped projected Newton on two variables) with an
//! exact projection onto the affine subspace (continuity equation plus
//! consensus plus endpoints), performed by a prefactored block-tridiagonal
//! KKT solve.
//!
//! The smoothed variant substitutes a mass-preserving convolution of the
//! density variables into both the action and the continuity equation, which
//! restricts the admissible paths to smoothed curves.

use crate::dynamics::{nce_residual, nl_divergence};
use crate::interpolation::Interpolation;
use crate::kernels::Convolution;
use crate::space::{Density, DiscreteSpace, Flux, Path};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

mod dense {
    //! Minimal dense linear algebra: row-major storage, LU with partial
    //! pivoting, and a symmetric block-tridiagonal driver on top.

    /// LU factorization in place with partial pivoting; returns the pivot
    /// permutation. `a` is `n x n` row-major.
    pub fn lu_factor(a: &mut [f64], n: usize) -> Vec<usize> {
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut best = col;
            let mut best_val = a[col * n + col].abs();
            for row in (col + 1)..n {
                let v = a[row * n + col].abs();
                if v > best_val {
                    best_val = v;
                    best = row;
                }
            }
            if best != col {
                piv.swap(best, col);
                for k in 0..n {
                    a.swap(best * n + k, col * n + k);
                }
            }
            let pivot = a[col * n + col];
            if pivot == 0.0 {
                continue; // singular column; downstream solves see zeros
            }
            let (top, bottom) = a.split_at_mut((col + 1) * n);
            let src = &top[col * n..(col + 1) * n];
            for row in (col + 1)..n {
                let r = &mut bottom[(row - col - 1) * n..(row - col) * n];
                let f = r[col] / pivot;
                r[col] = f;
                if f != 0.0 {
                    for k in (col + 1)..n {
                        r[k] -= f * src[k];
                    }
                }
            }
        }
        piv
    }

    /// Solves `A x = b` from the factorization; `b` is overwritten by `x`.
    /// `x` is caller-provided scratch of length at least `n`.
    pub fn lu_solve_buf(lu: &[f64], piv: &[usize], n: usize, b: &mut [f64], x: &mut [f64]) {
        for i in 0..n {
            x[i] = b[piv[i]];
        }
        for i in 0..n {
            let mut s = x[i];
            let row = &lu[i * n..i * n + i];
            for (k, l) in row.iter().enumerate() {
                s -= l * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= lu[i * n + k] * x[k];
            }
            x[i] = s / lu[i * n + i];
        }
        b.copy_from_slice(&x[..n]);
    }

    pub fn lu_solve(lu: &[f64], piv: &[usize], n: usize, b: &mut [f64]) {
        let mut x = vec![0.0; n];
        lu_solve_buf(lu, piv, n, b, &mut x);
    }

    /// A symmetric block-tridiagonal system with variable block sizes,
    /// factored once and solved many times. Lower couplings are the
    /// transposes of `uppers`. The system carries a small diagonal
    /// regularization and a known near-null direction (redundant mass
    /// constraints), so solves run iterative refinement against the
    /// original matrix.
    pub struct BlockTridiag {
        sizes: Vec<usize>,
        offsets: Vec<usize>,
        lus: Vec<Vec<f64>>,
        pivs: Vec<Vec<usize>>,
        uppers: Vec<Vec<f64>>,
        diags: Vec<Vec<f64>>,
    }

    impl BlockTridiag {
        pub fn factor(sizes: Vec<usize>, diags: Vec<Vec<f64>>, uppers: Vec<Vec<f64>>) -> Self {
            let nb = sizes.len();
            let mut offsets = vec![0usize];
            for &s in &sizes {
                offsets.push(offsets.last().unwrap() + s);
            }
            let mut lus: Vec<Vec<f64>> = Vec::with_capacity(nb);
            let mut pivs: Vec<Vec<usize>> = Vec::with_capacity(nb);
            let mut current = diags.clone();
            for k in 0..nb {
                let s = sizes[k];
                let mut d = std::mem::take(&mut current[k]);
                if k > 0 {
                    // d -= U^T inv(D~_{k-1}) U with U = uppers[k-1].
                    let sp = sizes[k - 1];
                    let u = &uppers[k - 1];
                    let lu = &lus[k - 1];
                    let piv = &pivs[k - 1];
                    let mut w = vec![0.0; sp * s];
                    let mut col = vec![0.0; sp];
                    for c in 0..s {
                        for r in 0..sp {
                            col[r] = u[r * s + c];
                        }
                        lu_solve(lu, piv, sp, &mut col);
                        for r in 0..sp {
                            w[r * s + c] = col[r];
                        }
                    }
                    for r in 0..sp {
                        let urow = &u[r * s..(r + 1) * s];
                        let wrow = &w[r * s..(r + 1) * s];
                        for i in 0..s {
                            let ui = urow[i];
                            if ui == 0.0 {
                                continue;
                            }
                            let drow = &mut d[i * s..(i + 1) * s];
                            for (dv, wv) in drow.iter_mut().zip(wrow) {
                                *dv -= ui * wv;
                            }
                        }
                    }
                }
                let piv = lu_factor(&mut d, s);
                lus.push(d);
                pivs.push(piv);
            }
            BlockTridiag {
                sizes,
                offsets,
                lus,
                pivs,
                uppers,
                diags,
            }
        }

        pub fn total_size(&self) -> usize {
            *self.offsets.last().unwrap()
        }

        /// `out = A x` with the original (unfactored) matrix.
        pub fn apply(&self, x: &[f64], out: &mut [f64]) {
            let nb = self.sizes.len();
            out.fill(0.0);
            for k in 0..nb {
                let s = self.sizes[k];
                let off = self.offsets[k];
                let d = &self.diags[k];
                for i in 0..s {
                    let row = &d[i * s..(i + 1) * s];
                    let mut acc = 0.0;
                    for (dv, xv) in row.iter().zip(&x[off..off + s]) {
                        acc += dv * xv;
                    }
                    out[off + i] += acc;
                }
                if k + 1 < nb {
                    let sn = self.sizes[k + 1];
                    let offn = self.offsets[k + 1];
                    let u = &self.uppers[k];
                    for i in 0..s {
                        let row = &u[i * sn..(i + 1) * sn];
                        let mut acc = 0.0;
                        for (uv, xv) in row.iter().zip(&x[offn..offn + sn]) {
                            acc += uv * xv;
                        }
                        out[off + i] += acc;
                        // Transposed (lower) coupling.
                        let xi = x[off + i];
                        if xi != 0.0 {
                            for (c, uv) in row.iter().enumerate() {
                                out[offn + c] += uv * xi;
                            }
                        }
                    }
                }
            }
        }

        /// Solves with one step of iterative refinement (the factorization is
        /// mildly regularized, so one correction recovers full accuracy).
        pub fn solve(&self, rhs: &mut [f64]) {
            let n = self.total_size();
            let b = rhs.to_vec();
            self.solve_raw(rhs);
            let mut r = vec![0.0; n];
            for _ in 0..1 {
                self.apply(rhs, &mut r);
                for (rv, bv) in r.iter_mut().zip(&b) {
                    *rv = bv - *rv;
                }
                let mut corr = r.clone();
                self.solve_raw(&mut corr);
                for (x, c) in rhs.iter_mut().zip(&corr) {
                    *x += c;
                }
            }
        }

        fn solve_raw(&self, rhs: &mut [f64]) {
            let nb = self.sizes.len();
            let smax = self.sizes.iter().cloned().max().unwrap_or(0);
            let mut scratch = vec![0.0; smax];
            let mut solved_prev = vec![0.0; smax];
            let mut tmp = vec![0.0; smax];
            for k in 0..nb {
                let s = self.sizes[k];
                let off = self.offsets[k];
                if k > 0 {
                    let sp = self.sizes[k - 1];
                    let u = &self.uppers[k - 1];
                    for (r, &v) in solved_prev.iter().enumerate().take(sp) {
                        if v == 0.0 {
                            continue;
                        }
                        let urow = &u[r * s..(r + 1) * s];
                        let dst = &mut rhs[off..off + s];
                        for (dv, uv) in dst.iter_mut().zip(urow) {
                            *dv -= v * uv;
                        }
                    }
                }
                tmp[..s].copy_from_slice(&rhs[off..off + s]);
                lu_solve_buf(&self.lus[k], &self.pivs[k], s, &mut tmp[..s], &mut scratch);
                solved_prev[..s].copy_from_slice(&tmp[..s]);
            }
            for k in (0..nb).rev() {
                let s = self.sizes[k];
                let off = self.offsets[k];
                if k + 1 < nb {
                    let sn = self.sizes[k + 1];
                    let u = &self.uppers[k];
                    let (head, tail) = rhs.split_at_mut(self.offsets[k + 1]);
                    let z_next = &tail[..sn];
                    let dst = &mut head[off..off + s];
                    for (r, dv) in dst.iter_mut().enumerate() {
                        let urow = &u[r * sn..(r + 1) * sn];
                        let mut acc = 0.0;
                        for (uv, zv) in urow.iter().zip(z_next) {
                            acc += uv * zv;
                        }
                        *dv -= acc;
                    }
                }
                tmp[..s].copy_from_slice(&rhs[off..off + s]);
                lu_solve_buf(&self.lus[k], &self.pivs[k], s, &mut tmp[..s], &mut scratch);
                rhs[off..off + s].copy_from_slice(&tmp[..s]);
            }
        }
    }

    /// `c = a * b`, `a` is `ra x ca`, `b` is `ca x cb`.
    pub fn mat_mul(a: &[f64], b: &[f64], ra: usize, ca: usize, cb: usize) -> Vec<f64> {
        let mut c = vec![0.0; ra * cb];
        for i in 0..ra {
            for k in 0..ca {
                let aik = a[i * ca + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &b[k * cb..(k + 1) * cb];
                let crow = &mut c[i * cb..(i + 1) * cb];
                for (cv, bv) in crow.iter_mut().zip(brow) {
                    *cv += aik * bv;
                }
            }
        }
        c
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SolveConfig {
    /// Number of time steps `T` (densities at `T + 1` time nodes).
    pub time_steps: usize,
    pub max_iters: usize,
    /// Tolerance on the splitting fixed-point residual (scaled by the
    /// uniform density).
    pub feas_tol: f64,
    /// Relative objective stagnation tolerance over the check window.
    pub gap_tol: f64,
    /// Density lower bound, relative to the uniform density.
    pub rho_floor: f64,
    /// Tolerance on the splitting stationarity (fixed-point) residual,
    /// scaled by the uniform density.
    pub stationarity_tol: f64,
    /// Scaling of the proximal step.
    pub tau_factor: f64,
    /// Douglas-Rachford relaxation, in (0, 2).
    pub over_relaxation: f64,
    /// Objective check cadence (iterations).
    pub check_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            time_steps: 16,
            max_iters: 50_000,
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            rho_floor: 1e-9,
            stationarity_tol: 1e-3,
            tau_factor: 0.05,
            over_relaxation: 1.8,
            check_every: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
    InfiniteCost,
}

/// Result of one distance computation.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// `sqrt` of the minimized total action.
    pub distance: f64,
    pub objective: f64,
    /// Midpoint action values `A(rho_{k+1/2}, j_{k+1/2})`, one per step.
    pub action_per_step: Vec<f64>,
    pub iterations: usize,
    /// Fixed-point residual of the splitting at termination.
    pub fixed_point_residual: f64,
    /// Continuity-equation residual of the reported path.
    pub nce_residual: f64,
    /// Absolute density floor used.
    pub rho_floor_abs: f64,
    #[serde(skip)]
    pub path: Path,
}

/// The affine projection (continuity equation + consensus + endpoints),
/// factored once per (space, smoothing, T) and reused across iterations.
pub struct ProjectionOperator<'a> {
    space: &'a DiscreteSpace,
    smoothing: Option<&'a Convolution>,
    t_steps: usize,
    dt: f64,
    factor: dense::BlockTridiag,
    s_mat: Option<Vec<f64>>,
    p_mat: Vec<f64>,
    n: usize,
}

impl<'a> ProjectionOperator<'a> {
    pub fn build(
        space: &'a DiscreteSpace,
        smoothing: Option<&'a Convolution>,
        t_steps: usize,
    ) -> Result<Self> {
        if t_steps < 2 {
            return Err(Error::Precondition("need at least 2 time steps".into()));
        }
        let n = space.len();
        let dt = 1.0 / t_steps as f64;
        let s_mat = smoothing.map(|c| c.matrix());
        let mut deg = vec![0.0; n];
        for e in space.edges() {
            deg[e.i] += 1.0;
            deg[e.j] += 1.0;
        }
        let p_mat = match &s_mat {
            None => {
                let mut p = vec![0.0; n * n];
                for i in 0..n {
                    p[i * n + i] = deg[i];
                }
                p
            }
            Some(s) => {
                let mut ds = s.clone();
                for i in 0..n {
                    for j in 0..n {
                        ds[i * n + j] *= deg[i];
                    }
                }
                let mut st = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        st[j * n + i] = s[i * n + j];
                    }
                }
                dense::mat_mul(&st, &ds, n, n, n)
            }
        };
        let m = space.ref_masses();
        let mut bbt = vec![0.0; n * n];
        for e in space.edges() {
            let (i, j, w) = (e.i, e.j, e.weight);
            bbt[i * n + i] += w * w * m[j] * m[j];
            bbt[j * n + j] += w * w * m[i] * m[i];
            bbt[i * n + j] -= w * w * m[i] * m[j];
            bbt[j * n + i] -= w * w * m[i] * m[j];
        }
        let max_diag = (0..n).map(|i| bbt[i * n + i]).fold(0.0, f64::max);
        let delta = 1e-10 * max_diag.max(1e-300);

        // S / dt and S^T / dt writers into a wide row-major block.
        let write_s = |out: &mut [f64],
                       row_off: usize,
                       col_off: usize,
                       width: usize,
                       sign: f64,
                       transpose: bool| {
            match &s_mat {
                None => {
                    for i in 0..n {
                        out[(row_off + i) * width + col_off + i] += sign / dt;
                    }
                }
                Some(s) => {
                    for i in 0..n {
                        for j in 0..n {
                            let v = if transpose { s[j * n + i] } else { s[i * n + j] };
                            out[(row_off + i) * width + col_off + j] += sign * v / dt;
                        }
                    }
                }
            }
        };

        let mut sizes = vec![n];
        sizes.extend(std::iter::repeat(2 * n).take(t_steps - 1));
        let mut diags: Vec<Vec<f64>> = Vec::with_capacity(t_steps);
        let mut uppers: Vec<Vec<f64>> = Vec::with_capacity(t_steps - 1);
        let mut d0 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d0[i * n + j] = -0.5 * bbt[i * n + j];
            }
            d0[i * n + i] -= delta;
        }
        diags.push(d0);
        let mut u0 = vec![0.0; n * 2 * n];
        write_s(&mut u0, 0, 0, 2 * n, 1.0, false);
        uppers.push(u0);
        for k in 1..t_steps {
            let w = 2 * n;
            let mut dk = vec![0.0; w * w];
            for i in 0..n {
                for j in 0..n {
                    dk[i * w + j] = p_mat[i * n + j];
                    dk[(n + i) * w + n + j] = -0.5 * bbt[i * n + j];
                }
                dk[i * w + i] += 2.0;
                dk[(n + i) * w + n + i] -= delta;
            }
            write_s(&mut dk, 0, n, w, -1.0, true);
            write_s(&mut dk, n, 0, w, -1.0, false);
            diags.push(dk);
            if k < t_steps - 1 {
                let mut uk = vec![0.0; w * w];
                for i in 0..n {
                    for j in 0..n {
                        uk[i * w + j] = 0.5 * p_mat[i * n + j];
                    }
                }
                write_s(&mut uk, n, 0, w, 1.0, false);
                uppers.push(uk);
            }
        }
        let factor = dense::BlockTridiag::factor(sizes, diags, uppers);
        Ok(ProjectionOperator {
            space,
            smoothing,
            t_steps,
            dt,
            factor,
            s_mat,
            p_mat,
            n,
        })
    }

    fn apply_s(&self, v: &[f64]) -> Vec<f64> {
        match self.smoothing {
            None => v.to_vec(),
            Some(c) => c.apply(v),
        }
    }


    fn apply_p(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.p_mat[i * n..(i + 1) * n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }



    /// Allocates reusable scratch for [`Self::project`].
    pub fn scratch(&self) -> ProjScratch {
        let (n, t, ne) = (self.n, self.t_steps, self.space.edges().len());
        ProjScratch {
            q: vec![0.0; t * n],
            rhs: vec![0.0; self.factor.total_size()],
            lam: vec![0.0; t * n],
            buf_n: vec![0.0; n],
            buf_n2: vec![0.0; n],
            buf_e: vec![0.0; ne],
        }
    }

    /// Projects `(rho, j, a, b)` in place onto the affine subspace; `rho`
    /// holds the `T - 1` interior slices.
    pub fn project(
        &self,
        scratch: &mut ProjScratch,
        rho: &mut [f64],
        j: &mut [f64],
        a: &mut [f64],
        b: &mut [f64],
        mu0: &[f64],
        mu1: &[f64],
    ) {
        let (n, t, ne) = (self.n, self.t_steps, self.space.edges().len());
        let q = &mut scratch.q;
        q.fill(0.0);
        for k in 0..t {
            for (e, edge) in self.space.edges().iter().enumerate() {
                q[k * n + edge.i] += a[k * ne + e];
                q[k * n + edge.j] += b[k * ne + e];
            }
        }
        let rhs = &mut scratch.rhs;
        {
            self.apply_s_into(mu0, &mut scratch.buf_n);
            self.div_into(&j[0..ne], &mut scratch.buf_n2);
            for i in 0..n {
                rhs[i] = -scratch.buf_n2[i] + scratch.buf_n[i] / self.dt;
            }
        }
        let p_mu0 = self.apply_p(mu0);
        let p_mu1 = self.apply_p(mu1);
        let s_mu1 = self.apply_s(mu1);
        for k in 1..t {
            let off = n + (k - 1) * 2 * n;
            self.apply_s_transpose_into(&q[(k - 1) * n..k * n], &mut scratch.buf_n);
            self.apply_s_transpose_into(&q[k * n..(k + 1) * n], &mut scratch.buf_n2);
            for i in 0..n {
                let mut v = 2.0 * rho[(k - 1) * n + i] + scratch.buf_n[i] + scratch.buf_n2[i];
                if k == 1 {
                    v -= 0.5 * p_mu0[i];
                }
                if k == t - 1 {
                    v -= 0.5 * p_mu1[i];
                }
                rhs[off + i] = v;
            }
            self.div_into(&j[k * ne..(k + 1) * ne], &mut scratch.buf_n);
            for i in 0..n {
                let mut v = -scratch.buf_n[i];
                if k == t - 1 {
                    v -= s_mu1[i] / self.dt;
                }
                rhs[off + n + i] = v;
            }
        }
        self.factor.solve(rhs);
        let lam = &mut scratch.lam;
        lam[0..n].copy_from_slice(&rhs[0..n]);
        for k in 1..t {
            let off = n + (k - 1) * 2 * n;
            rho[(k - 1) * n..k * n].copy_from_slice(&rhs[off..off + n]);
            lam[k * n..(k + 1) * n].copy_from_slice(&rhs[off + n..off + 2 * n]);
        }
        for k in 0..t {
            self.div_transpose_into(&lam[k * n..(k + 1) * n], &mut scratch.buf_e);
            for e in 0..ne {
                j[k * ne + e] -= 0.5 * scratch.buf_e[e];
            }
        }
        for k in 0..t {
            let mid = &mut scratch.buf_n;
            for i in 0..n {
                let lo = if k == 0 { mu0[i] } else { rho[(k - 1) * n + i] };
                let hi = if k == t - 1 { mu1[i] } else { rho[k * n + i] };
                mid[i] = 0.5 * (lo + hi);
            }
            let smid = match self.smoothing {
                None => &*mid,
                Some(_) => {
                    self.apply_s_split(mid, &mut scratch.buf_n2);
                    &*(&scratch.buf_n2)
                }
            };
            for (e, edge) in self.space.edges().iter().enumerate() {
                a[k * ne + e] = smid[edge.i];
                b[k * ne + e] = smid[edge.j];
            }
        }
    }

    fn apply_s_into(&self, v: &[f64], out: &mut [f64]) {
        match self.smoothing {
            None => out.copy_from_slice(v),
            Some(c) => out.copy_from_slice(&c.apply(v)),
        }
    }

    fn apply_s_split(&self, v: &[f64], out: &mut [f64]) {
        self.apply_s_into(v, out)
    }

    fn apply_s_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        match &self.s_mat {
            None => out.copy_from_slice(v),
            Some(s) => {
                let n = self.n;
                out.fill(0.0);
                for i in 0..n {
                    let vi = v[i];
                    if vi == 0.0 {
                        continue;
                    }
                    for (jj, o) in out.iter_mut().enumerate() {
                        *o += s[i * n + jj] * vi;
                    }
                }
            }
        }
    }

    fn div_into(&self, j: &[f64], out: &mut [f64]) {
        let m = self.space.ref_masses();
        out.fill(0.0);
        for (e, edge) in self.space.edges().iter().enumerate() {
            out[edge.i] += j[e] * edge.weight * m[edge.j];
            out[edge.j] -= j[e] * edge.weight * m[edge.i];
        }
    }

    fn div_transpose_into(&self, lam: &[f64], out: &mut [f64]) {
        let m = self.space.ref_masses();
        for (e, edge) in self.space.edges().iter().enumerate() {
            out[e] = edge.weight * (m[edge.j] * lam[edge.i] - m[edge.i] * lam[edge.j]);
        }
    }
}

/// Reusable scratch buffers for [`ProjectionOperator::project`].
pub struct ProjScratch {
    q: Vec<f64>,
    rhs: Vec<f64>,
    lam: Vec<f64>,
    buf_n: Vec<f64>,
    buf_n2: Vec<f64>,
    buf_e: Vec<f64>,
}

/// Test hook for the proximal step.
#[doc(hidden)]
pub fn prox_edge_for_test(
    theta: &Interpolation,
    w: f64,
    tau: f64,
    floor: f64,
    j0: f64,
    a0: f64,
    b0: f64,
) -> (f64, f64, f64) {
    prox_edge(theta, w, tau, floor, j0, a0, b0)
}

/// Proximal step of one separable term: minimizes
/// `w j^2 / theta(a, b) + ((j - j0)^2 + (a - a0)^2 + (b - b0)^2) / (2 tau)`
/// over `a, b >= floor` by partial minimization in `j` and a damped projected
/// Newton in `(a, b)`.
fn prox_edge(
    theta: &Interpolation,
    w: f64,
    tau: f64,
    floor: f64,
    j0: f64,
    a0: f64,
    b0: f64,
) -> (f64, f64, f64) {
    prox_edge_warm(theta, w, tau, floor, j0, a0, b0, None)
}

/// Newton-based prox with an optional warm start for `(a, b)` (the previous
/// iterate); the problem is strictly convex, so the start only affects the
/// iteration count.
#[allow(clippy::too_many_arguments)]
fn prox_edge_warm(
    theta: &Interpolation,
    w: f64,
    tau: f64,
    floor: f64,
    j0: f64,
    a0: f64,
    b0: f64,
    warm: Option<(f64, f64)>,
) -> (f64, f64, f64) {
    let wt = 2.0 * w * tau;
    if j0 == 0.0 {
        return (0.0, a0.max(floor), b0.max(floor));
    }
    let c = w * j0 * j0;
    let start = floor.max(1e-300);
    if matches!(
        theta.family,
        crate::interpolation::InterpolationFamily::Arithmetic
    ) {
        return prox_edge_arithmetic(w, tau, start, j0, a0, b0, c, wt);
    }
    let (mut a, mut b) = match warm {
        Some((wa, wb)) => (wa.max(start), wb.max(start)),
        None => (a0.max(start), b0.max(start)),
    };
    let psi = |a: f64, b: f64| -> f64 {
        c / (theta.eval(a, b) + wt) + ((a - a0).powi(2) + (b - b0).powi(2)) / (2.0 * tau)
    };
    let mut value = psi(a, b);
    let scale = (a0.abs() + b0.abs() + wt + 1e-300) / tau;
    for _ in 0..60 {
        let th = theta.eval(a, b);
        let den = th + wt;
        let (ga_t, gb_t) = theta.grad(a, b);
        let ga = -c * ga_t / (den * den) + (a - a0) / tau;
        let gb = -c * gb_t / (den * den) + (b - b0) / tau;
        // Active-set reduction: a bound is active when pinned with an
        // inward-pointing gradient.
        let a_active = a <= start && ga > 0.0;
        let b_active = b <= start && gb > 0.0;
        let ga_eff = if a_active { 0.0 } else { ga };
        let gb_eff = if b_active { 0.0 } else { gb };
        if ga_eff.abs() + gb_eff.abs() <= 1e-11 * scale {
            break;
        }
        let hess_t = theta.hessian(a, b);
        let f1 = 2.0 * c / (den * den * den);
        let f2 = c / (den * den);
        let haa = f1 * ga_t * ga_t - f2 * hess_t[0][0] + 1.0 / tau;
        let hab = f1 * ga_t * gb_t - f2 * hess_t[0][1];
        let hbb = f1 * gb_t * gb_t - f2 * hess_t[1][1] + 1.0 / tau;
        // Newton on the free face only.
        let (mut da, mut db) = match (a_active, b_active) {
            (true, true) => break,
            (true, false) => (0.0, -gb / hbb),
            (false, true) => (-ga / haa, 0.0),
            (false, false) => {
                let det = haa * hbb - hab * hab;
                if det > 1e-300 && haa > 0.0 {
                    ((-ga * hbb + gb * hab) / det, (-gb * haa + ga * hab) / det)
                } else {
                    (-ga * tau, -gb * tau)
                }
            }
        };
        if !da.is_finite() || !db.is_finite() {
            da = -ga_eff * tau;
            db = -gb_eff * tau;
        }
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..25 {
            let an = (a + step * da).max(start);
            let bn = (b + step * db).max(start);
            let vn = psi(an, bn);
            if vn < value {
                a = an;
                b = bn;
                value = vn;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        // No strict decrease anywhere along the direction: numerically at
        // the constrained optimum.
        if !improved {
            break;
        }
    }
    let th = theta.eval(a, b);
    let j = j0 * th / (th + wt);
    (j, a, b)
}

/// Arithmetic-mean prox: `theta = (a + b)/2` depends only on the sum, so the
/// stationarity condition is a scalar cubic solved by safeguarded Newton;
/// bound pinning reduces to the same scalar problem in the free variable.
#[allow(clippy::too_many_arguments)]
fn prox_edge_arithmetic(
    _w: f64,
    tau: f64,
    start: f64,
    j0: f64,
    a0: f64,
    b0: f64,
    c: f64,
    wt: f64,
) -> (f64, f64, f64) {
    // Scalar root of (x - x0) (x/2 + q)^2 = rhs for x >= lo (monotone
    // increasing right of x0; root is unique and > x0).
    let newton = |x0: f64, q: f64, rhs: f64, lo: f64| -> f64 {
        let mut x = x0.max(lo) + rhs / (0.5 * x0.max(lo) + q).powi(2);
        for _ in 0..60 {
            let base = 0.5 * x + q;
            let g = (x - x0) * base * base - rhs;
            let dg = base * base + (x - x0) * base;
            let step = g / dg;
            x -= step;
            if x < lo {
                x = lo;
            }
            if step.abs() <= 1e-14 * (x.abs() + 1.0) {
                break;
            }
        }
        x.max(lo)
    };
    // Candidate stationary points: free split, one bound pinned, corner;
    // the best feasible candidate is the constrained minimizer.
    let psi = |a: f64, b: f64| -> f64 {
        c / (0.5 * (a + b) + wt) + ((a - a0).powi(2) + (b - b0).powi(2)) / (2.0 * tau)
    };
    let sigma0 = a0 + b0;
    let sigma = newton(sigma0, wt, c * tau, 2.0 * start);
    let d = 0.5 * (sigma - sigma0);
    let mut best = (f64::INFINITY, start, start);
    let mut consider = |a: f64, b: f64| {
        if a >= start && b >= start {
            let v = psi(a, b);
            if v < best.0 {
                best = (v, a, b);
            }
        }
    };
    consider(a0 + d, b0 + d);
    consider(start, pinned_newton(b0, start, wt, 0.5 * c * tau));
    consider(pinned_newton(a0, start, wt, 0.5 * c * tau), start);
    consider(start, start);
    let (_, a, b) = best;
    let th = 0.5 * (a + b);
    let j = j0 * th / (th + wt);
    (j, a, b)
}

/// Root of `(x - x0) ((pin + x)/2 + q)^2 = rhs` for `x >= pin`.
fn pinned_newton(x0: f64, pin: f64, q: f64, rhs: f64) -> f64 {
    let lo = pin;
    let mut x = x0.max(lo) + rhs / (0.5 * (pin + x0.max(lo)) + q).powi(2);
    for _ in 0..60 {
        let base = 0.5 * (pin + x) + q;
        let g = (x - x0) * base * base - rhs;
        let dg = base * base + (x - x0) * base;
        let step = g / dg;
        x -= step;
        if x < lo {
            x = lo;
        }
        if step.abs() <= 1e-14 * (x.abs() + 1.0) {
            break;
        }
    }
    x.max(lo)
}

struct Workspace {
    rho: Vec<f64>,
    j: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Workspace {
    fn zeros(n: usize, ne: usize, t: usize) -> Self {
        Workspace {
            rho: vec![0.0; (t - 1) * n],
            j: vec![0.0; t * ne],
            a: vec![0.0; t * ne],
            b: vec![0.0; t * ne],
        }
    }

    fn combine(x: &Workspace, cx: f64, y: &Workspace, cy: f64) -> Workspace {
        let comb =
            |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(a, b)| cx * a + cy * b).collect() };
        Workspace {
            rho: comb(&x.rho, &y.rho),
            j: comb(&x.j, &y.j),
            a: comb(&x.a, &y.a),
            b: comb(&x.b, &y.b),
        }
    }

    fn add_scaled(&mut self, other: &Workspace, c: f64) {
        let add = |u: &mut [f64], v: &[f64]| {
            for (a, b) in u.iter_mut().zip(v) {
                *a += c * b;
            }
        };
        add(&mut self.rho, &other.rho);
        add(&mut self.j, &other.j);
        add(&mut self.a, &other.a);
        add(&mut self.b, &other.b);
    }

    fn max_abs_diff(&self, other: &Workspace) -> f64 {
        let d = |u: &[f64], v: &[f64]| {
            u.iter()
                .zip(v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        d(&self.rho, &other.rho)
            .max(d(&self.j, &other.j))
            .max(d(&self.a, &other.a))
            .max(d(&self.b, &other.b))
    }
}

/// Doubles the time resolution of a path: densities get midpoint slices,
/// fluxes repeat (the staggered continuity equation is preserved exactly).
fn upsample_path(path: &Path) -> Path {
    let t = path.steps();
    let mut densities = Vec::with_capacity(2 * t + 1);
    for k in 0..t {
        densities.push(path.densities[k].clone());
        let mid: Vec<f64> = path.densities[k]
            .values
            .iter()
            .zip(&path.densities[k + 1].values)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        densities.push(Density { values: mid });
    }
    densities.push(path.densities[t].clone());
    let mut fluxes = Vec::with_capacity(2 * t);
    for f in &path.fluxes {
        fluxes.push(f.clone());
        fluxes.push(f.clone());
    }
    Path { densities, fluxes }
}

/// Upsamples the splitting state offset (z - y) to double time resolution:
/// interior density slices interpolate, per-step blocks repeat.
fn upsample_state(n: usize, ne: usize, t_coarse: usize, w: &Workspace) -> Workspace {
    let t_fine = 2 * t_coarse;
    let mut out = Workspace::zeros(n, ne, t_fine);
    let coarse_rho = |k: usize| -> Option<&[f64]> {
        if k >= 1 && k <= t_coarse - 1 {
            Some(&w.rho[(k - 1) * n..k * n])
        } else {
            None
        }
    };
    for kf in 1..t_fine {
        let dst = &mut out.rho[(kf - 1) * n..kf * n];
        if kf % 2 == 0 {
            if let Some(src) = coarse_rho(kf / 2) {
                dst.copy_from_slice(src);
            }
        } else {
            let lo = coarse_rho(kf / 2);
            let hi = coarse_rho(kf / 2 + 1);
            for i in 0..n {
                let l = lo.map_or(0.0, |s| s[i]);
                let h = hi.map_or(0.0, |s| s[i]);
                let cnt = (lo.is_some() as u8 + hi.is_some() as u8).max(1) as f64;
                dst[i] = (l + h) / cnt;
            }
        }
    }
    for k in 0..t_coarse {
        for half in 0..2 {
            let kf = 2 * k + half;
            out.j[kf * ne..(kf + 1) * ne].copy_from_slice(&w.j[k * ne..(k + 1) * ne]);
            out.a[kf * ne..(kf + 1) * ne].copy_from_slice(&w.a[k * ne..(k + 1) * ne]);
            out.b[kf * ne..(kf + 1) * ne].copy_from_slice(&w.b[k * ne..(k + 1) * ne]);
        }
    }
    out
}

fn solve_inner(
    space: &DiscreteSpace,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    smoothing: Option<&Convolution>,
    config: &SolveConfig,
) -> Result<SolveReport> {
    // Coarse-to-fine in time: large step counts start from the upsampled
    // solution of the half-resolution problem, which cuts the iteration
    // count dramatically for endpoint-degenerate interpolations.
    let mut schedule = vec![config.time_steps];
    let mut cur = config.time_steps;
    while cur >= 32 && cur % 2 == 0 {
        cur /= 2;
        schedule.push(cur);
    }
    schedule.reverse();
    let mut init: Option<(Path, Workspace)> = None;
    let mut total_iters = 0;
    let mut last: Option<SolveReport> = None;
    let n = space.len();
    let ne = space.edges().len();
    for (si, &stage_t) in schedule.iter().enumerate() {
        let mut stage_config = config.clone();
        stage_config.time_steps = stage_t;
        if si + 1 < schedule.len() {
            // Intermediate stages only seed the next level.
            stage_config.gap_tol = (config.gap_tol * 10.0).min(1e-5);
        }
        let (rep, state) = solve_stage(
            space,
            theta,
            mu0,
            mu1,
            smoothing,
            &stage_config,
            init.as_ref(),
        )?;
        total_iters += rep.iterations.min(stage_config.max_iters);
        if si + 1 < schedule.len() {
            init = Some((
                upsample_path(&rep.path),
                upsample_state(n, ne, stage_t, &state),
            ));
        }
        last = Some(rep);
    }
    let mut rep = last.expect("schedule is never empty");
    rep.iterations = total_iters;
    Ok(rep)
}

fn solve_stage(
    space: &DiscreteSpace,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    smoothing: Option<&Convolution>,
    config: &SolveConfig,
    init: Option<&(Path, Workspace)>,
) -> Result<(SolveReport, Workspace)> {
    let n = space.len();
    let ne = space.edges().len();
    let t = config.time_steps;
    let dt = 1.0 / t as f64;
    let mass0 = mu0.total_mass(space);
    let mass1 = mu1.total_mass(space);
    if !(mass0 > 0.0) || (mass0 - mass1).abs() > 1e-9 * mass0.max(1.0) {
        return Err(Error::MassMismatch(mass0, mass1));
    }
    let uniform_density = mass0 / space.total_volume();
    let floor = config.rho_floor * uniform_density;

    let proj = ProjectionOperator::build(space, smoothing, t)?;
    let m = space.ref_masses();
    // objective = sum_{k,e} w_e j^2 / theta(a, b) with w_e = dt eta m_i m_j.
    let w_edge: Vec<f64> = space
        .edges()
        .iter()
        .map(|e| dt * e.weight * m[e.i] * m[e.j])
        .collect();
    let w_mean = w_edge.iter().sum::<f64>() / ne as f64;
    let tau = config.tau_factor * uniform_density / (2.0 * w_mean);

    // Start from the coarse-stage path when given, otherwise from linear
    // density interpolation; the projection performs the least-squares
    // continuity-equation solve for the initial fluxes.
    let mut z = Workspace::zeros(n, ne, t);
    let mut state_offset: Option<&Workspace> = None;
    match init {
        Some((path, offset)) if path.steps() == t => {
            for k in 1..t {
                z.rho[(k - 1) * n..k * n].copy_from_slice(&path.densities[k].values);
            }
            for k in 0..t {
                z.j[k * ne..(k + 1) * ne].copy_from_slice(&path.fluxes[k].values);
            }
            state_offset = Some(offset);
        }
        _ => {
            for k in 1..t {
                let s = k as f64 * dt;
                for i in 0..n {
                    z.rho[(k - 1) * n + i] = (1.0 - s) * mu0.values[i] + s * mu1.values[i];
                }
            }
        }
    }
    let mut scratch = proj.scratch();
    proj.project(
        &mut scratch,
        &mut z.rho,
        &mut z.j,
        &mut z.a,
        &mut z.b,
        &mu0.values,
        &mu1.values,
    );
    if let Some(offset) = state_offset {
        z.add_scaled(offset, 1.0);
    }

    let objective_of = |y: &Workspace| -> (f64, Vec<f64>) {
        let mut per_step = vec![0.0; t];
        for (k, slot) in per_step.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in 0..ne {
                let j = y.j[k * ne + e];
                if j == 0.0 {
                    continue;
                }
                let th = theta.eval(y.a[k * ne + e].max(floor), y.b[k * ne + e].max(floor));
                if th <= 0.0 {
                    acc = f64::INFINITY;
                    break;
                }
                acc += w_edge[e] * j * j / th;
            }
            *slot = acc / dt;
        }
        let total: f64 = per_step.iter().sum::<f64>() * dt;
        (total, per_step)
    };

    let mut y = Workspace::zeros(n, ne, t);
    let mut warm_a = z.a.clone();
    let mut warm_b = z.b.clone();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = config.max_iters;
    let mut fixed_point_residual = f64::INFINITY;
    let mut window: Vec<f64> = Vec::new();
    let alpha = config.over_relaxation;

    for it in 0..config.max_iters {
        let mut x = Workspace {
            rho: z.rho.iter().map(|&v| v.max(0.0)).collect(),
            j: vec![0.0; t * ne],
            a: vec![0.0; t * ne],
            b: vec![0.0; t * ne],
        };
        {
            let (jz, az, bz, w) = (&z.j, &z.a, &z.b, &w_edge);
            let (wa, wb) = (&warm_a, &warm_b);
            let body = |k: usize, jx: &mut [f64], ax: &mut [f64], bx: &mut [f64]| {
                for e in 0..ne {
                    let idx = k * ne + e;
                    let (jv, av, bv) = prox_edge_warm(
                        theta,
                        w[e],
                        tau,
                        floor,
                        jz[idx],
                        az[idx],
                        bz[idx],
                        Some((wa[idx], wb[idx])),
                    );
                    jx[e] = jv;
                    ax[e] = av;
                    bx[e] = bv;
                }
            };
            if t * ne >= 8192 {
                x.j
                    .par_chunks_mut(ne)
                    .zip(x.a.par_chunks_mut(ne))
                    .zip(x.b.par_chunks_mut(ne))
                    .enumerate()
                    .for_each(|(k, ((jx, ax), bx))| body(k, jx, ax, bx));
            } else {
                for (k, ((jx, ax), bx)) in x
                    .j
                    .chunks_mut(ne)
                    .zip(x.a.chunks_mut(ne))
                    .zip(x.b.chunks_mut(ne))
                    .enumerate()
                {
                    body(k, jx, ax, bx);
                }
            }
            warm_a.copy_from_slice(&x.a);
            warm_b.copy_from_slice(&x.b);
        }
        let mut ynew = Workspace::combine(&x, 2.0, &z, -1.0);
        proj.project(
            &mut scratch,
            &mut ynew.rho,
            &mut ynew.j,
            &mut ynew.a,
            &mut ynew.b,
            &mu0.values,
            &mu1.values,
        );
        fixed_point_residual = x.max_abs_diff(&ynew) / uniform_density.max(1e-300);
        let delta = Workspace::combine(&ynew, 1.0, &x, -1.0);
        z.add_scaled(&delta, alpha);
        y = ynew;

        if it % config.check_every == 0 || it + 1 == config.max_iters {
            let (obj, _) = objective_of(&y);
            window.push(obj);
            let win_len = 12;
            if window.len() > win_len {
                window.remove(0);
            }
            let stagnated = window.len() >= win_len && {
                let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi.is_finite() && (hi - lo) <= config.gap_tol * hi.abs().max(1e-12)
            };
            if fixed_point_residual <= config.stationarity_tol && stagnated {
                status = SolveStatus::Converged;
                iterations = it + 1;
                break;
            }
        }
    }

    let (objective, per_step) = objective_of(&y);
    let mut densities = Vec::with_capacity(t + 1);
    densities.push(mu0.clone());
    for k in 1..t {
        densities.push(Density {
            values: y.rho[(k - 1) * n..k * n].to_vec(),
        });
    }
    densities.push(mu1.clone());
    let fluxes: Vec<Flux> = (0..t)
        .map(|k| Flux {
            values: y.j[k * ne..(k + 1) * ne].to_vec(),
        })
        .collect();
    let path = Path { densities, fluxes };
    let nce = match smoothing {
        None => nce_residual(space, &path),
        Some(conv) => {
            let mut worst = 0.0f64;
            for k in 0..t {
                let div = nl_divergence(space, &path.fluxes[k]);
                let lo = conv.apply(&path.densities[k].values);
                let hi = conv.apply(&path.densities[k + 1].values);
                for i in 0..n {
                    worst = worst.max(((hi[i] - lo[i]) / dt + div[i]).abs());
                }
            }
            worst
        }
    };
    let offset = Workspace::combine(&z, 1.0, &y, -1.0);
    Ok((
        SolveReport {
            status,
            distance: objective.max(0.0).sqrt(),
            objective,
            action_per_step: per_step,
            iterations,
            fixed_point_residual,
            nce_residual: nce,
            rho_floor_abs: floor,
            path,
        },
        offset,
    ))
}

/// Computes `W_{eta,theta,m}(mu0, mu1)` on the space's assembled edges.
pub fn solve(
    space: &DiscreteSpace,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    config: &SolveConfig,
) -> Result<SolveReport> {
    solve_inner(space, theta, mu0, mu1, None, config)
}

/// The smoothed distance: densities entering the action and the continuity
/// equation are convolved fields of the free variables, so admissible paths
/// are smoothed curves between the raw endpoints. Satisfies the sandwich
/// `W(S mu0, S mu1) <= W_s <= W(mu0, mu1)` up to solver tolerance.
pub fn solve_smoothed(
    space: &DiscreteSpace,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    smoothing: &Convolution,
    config: &SolveConfig,
) -> Result<SolveReport> {
    solve_inner(space, theta, mu0, mu1, Some(smoothing), config)
}

/// Restriction of a path to `[t0, t1]`, reparametrized to unit time (fluxes
/// scale by the window length).
pub fn restrict(path: &Path, t0: f64, t1: f64) -> Result<Path> {
    let t = path.steps();
    let k0 = (t0 * t as f64).round() as usize;
    let k1 = (t1 * t as f64).round() as usize;
    if k1 <= k0 || k1 > t {
        return Err(Error::Precondition("invalid restriction window".into()));
    }
    let scale = (k1 - k0) as f64 / t as f64;
    Ok(Path {
        densities: path.densities[k0..=k1].to_vec(),
        fluxes: path.fluxes[k0..k1]
            .iter()
            .map(|f| Flux {
                values: f.values.iter().map(|v| v * scale).collect(),
            })
            .collect(),
    })
}

/// Floor-continuation evidence: re-solves with the density floor shrunk a
/// decade at a time. In the disconnected regime the continuum distance is
/// infinite; sustained objective growth across the continuation is the
/// configured divergence evidence (the diagnosis is heuristic, and a single
/// run is never trusted).
#[derive(Debug, Clone, Serialize)]
pub struct FloorContinuation {
    pub floors: Vec<f64>,
    pub objectives: Vec<f64>,
    pub growth_ratios: Vec<f64>,
    /// True when every per-decade ratio reaches the detection threshold.
    pub diverging: bool,
}

pub fn floor_continuation(
    space: &DiscreteSpace,
    theta: &Interpolation,
    mu0: &Density,
    mu1: &Density,
    config: &SolveConfig,
    decades: usize,
    growth_threshold: f64,
) -> Result<FloorContinuation> {
    let mut floors = Vec::new();
    let mut objectives = Vec::new();
    for k in 0..decades {
        let mut c = config.clone();
        c.rho_floor = config.rho_floor * 10f64.powi(-(k as i32));
        let rep = solve(space, theta, mu0, mu1, &c)?;
        floors.push(c.rho_floor);
        objectives.push(rep.objective);
    }
    let growth_ratios: Vec<f64> = objectives
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
        .collect();
    let diverging =
        !growth_ratios.is_empty() && growth_ratios.iter().all(|&r| r >= growth_threshold);
    Ok(FloorContinuation {
        floors,
        objectives,
        growth_ratios,
        diverging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_arithmetic_closed_form() {
        let space = DiscreteSpace::two_point(0.5).unwrap();
        let theta = Interpolation::arithmetic();
        let mu0 = Density::dirac(&space, 0);
        let mu1 = Density::dirac(&space, 1);
        let config = SolveConfig {
            time_steps: 32,
            ..Default::default()
        };
        let rep = solve(&space, &theta, &mu0, &mu1, &config).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert_abs_diff_eq!(rep.distance, 2.0, epsilon = 2e-3);
        assert!(rep.nce_residual < 1e-8, "nce {}", rep.nce_residual);
    }

    #[test]
    fn identical_endpoints_give_zero() {
        let k = crate::kernels::RadialKernel::indicator(1, 0.4);
        let space = DiscreteSpace::grid(1, 1.0, 9, &k).unwrap();
        let theta = Interpolation::arithmetic();
        let mu = Density::uniform(&space);
        let rep = solve(&space, &theta, &mu, &mu, &SolveConfig::default()).unwrap();
        assert!(rep.distance < 1e-7, "distance {}", rep.distance);
    }

    #[test]
    fn mass_mismatch_is_infeasible() {
        let space = DiscreteSpace::two_point(0.5).unwrap();
        let theta = Interpolation::arithmetic();
        let mu0 = Density::dirac(&space, 0);
        let mu1 = Density::new(vec![0.0, 2.0]).unwrap();
        assert!(matches!(
            solve(&space, &theta, &mu0, &mu1, &SolveConfig::default()),
            Err(Error::MassMismatch(_, _))
        ));
    }

    #[test]
    fn mass_scaling_of_squared_distance() {
        let k = crate::kernels::RadialKernel::indicator(1, 0.5);
        let space = DiscreteSpace::grid(1, 1.0, 9, &k).unwrap();
        let theta = Interpolation::arithmetic();
        let mut v0 = vec![0.0; 9];
        let mut v1 = vec![0.0; 9];
        v0[1] = 2.0;
        v0[2] = 1.0;
        v1[6] = 1.5;
        v1[7] = 1.5;
        let mu0 = Density::new(v0).unwrap();
        let mu1 = Density::new(v1).unwrap();
        let config = SolveConfig {
            gap_tol: 1e-9,
            ..Default::default()
        };
        let d1 = solve(&space, &theta, &mu0, &mu1, &config).unwrap();
        let c = 3.0;
        let d2 = solve(&space, &theta, &mu0.scaled(c), &mu1.scaled(c), &config).unwrap();
        assert_abs_diff_eq!(
            d2.objective,
            c * d1.objective,
            epsilon = 1e-4 * c * d1.objective.max(1e-12)
        );
    }

    #[test]
    fn restrict_full_window_is_identity() {
        let space = DiscreteSpace::two_point(0.5).unwrap();
        let theta = Interpolation::arithmetic();
        let mu0 = Density::dirac(&space, 0);
        let mu1 = Density::dirac(&space, 1);
        let rep = solve(&space, &theta, &mu0, &mu1, &SolveConfig::default()).unwrap();
        let full = restrict(&rep.path, 0.0, 1.0).unwrap();
        assert_eq!(full.steps(), rep.path.steps());
        assert_abs_diff_eq!(
            full.fluxes[0].values[0],
            rep.path.fluxes[0].values[0],
            epsilon = 1e-15
        );
    }
}
