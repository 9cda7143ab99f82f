//! Radial jump kernels, their moments, and the derived smoothing kernels.
//!
//! A kernel is given by a nonincreasing radial profile supported in `(0, 1]`
//! together with a spatial dimension `d` and a scale `eps`; the rescaled
//! kernel is `eta_eps(r) = eps^{-d} eta(r/eps)`. The `zeta` kernel
//! `zeta(r) = int_r^inf s eta(s) ds` turns solutions of the local continuity
//! equation into exact solutions of the nonlocal one, and the Laplace kernel
//! `K = c_K exp(-|x|)` provides relative-Lipschitz smoothing.

use crate::quadrature::integrate;
use crate::space::DiscreteSpace;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // alpha_d = pi^{d/2} / Gamma(d/2 + 1)
    let d = d as f64;
    std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0)
}

/// Gamma function via the Lanczos approximation (g = 7, n = 9).
fn gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, &g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Kernel family of the unscaled radial profile.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum KernelFamily {
    /// `eta(r) = 1` on `(0, 1]`.
    Indicator,
    /// `eta(r) = exp(1 - 1/(1 - r^2))` on `(0, 1)`; smooth, compactly supported.
    SmoothBump,
    /// `eta(r) = c_s r^{-d-s}` on `(0, 1]`: algebraic blow-up at the origin.
    TruncatedFractional { s: f64, c_s: f64 },
    /// Tabulated `(r, value)` pairs, piecewise linear, nonincreasing.
    Custom { table: Vec<(f64, f64)> },
}

/// A radial jump kernel `eta` with dimension and scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialKernel {
    pub family: KernelFamily,
    pub dim: usize,
    pub scale: f64,
    /// Support radius of the unscaled profile (convention: 1).
    pub support_radius: f64,
}

impl RadialKernel {
    pub fn new(family: KernelFamily, dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be >= 1".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidKernel("scale must be positive".into()));
        }
        match &family {
            KernelFamily::TruncatedFractional { s, c_s } => {
                if !(*s > 0.0) || !(*c_s > 0.0) {
                    return Err(Error::InvalidKernel(
                        "fractional kernel needs s > 0 and c_s > 0".into(),
                    ));
                }
                if *s >= 2.0 {
                    return Err(Error::InvalidKernel(
                        "fractional exponent s must be < 2 for the tail moment bound".into(),
                    ));
                }
            }
            KernelFamily::Custom { table } => {
                if table.is_empty() {
                    return Err(Error::InvalidKernel("empty custom profile".into()));
                }
                let mut prev_r = 0.0;
                let mut prev_v = f64::INFINITY;
                for &(r, v) in table {
                    if !(r > prev_r) {
                        return Err(Error::InvalidKernel(
                            "custom profile radii must be strictly increasing".into(),
                        ));
                    }
                    if v > prev_v + 1e-12 * prev_v.abs().max(1.0) {
                        return Err(Error::InvalidKernel(
                            "custom profile must be nonincreasing".into(),
                        ));
                    }
                    if v < 0.0 {
                        return Err(Error::InvalidKernel("custom profile must be >= 0".into()));
                    }
                    prev_r = r;
                    prev_v = v;
                }
                if prev_r > 1.0 + 1e-12 {
                    return Err(Error::InvalidKernel(
                        "custom profile support must lie in (0, 1]".into(),
                    ));
                }
            }
            _ => {}
        }
        let k = RadialKernel {
            family,
            dim,
            scale,
            support_radius: 1.0,
        };
        k.check_monotone_sample()?;
        Ok(k)
    }

    /// Indicator kernel shortcut.
    pub fn indicator(dim: usize, scale: f64) -> Self {
        Self::new(KernelFamily::Indicator, dim, scale).expect("indicator kernel is always valid")
    }

    /// Algebraic blow-up parameters `(s, c_s)` when declared.
    pub fn blowup_params(&self) -> Option<(f64, f64)> {
        match self.family {
            KernelFamily::TruncatedFractional { s, c_s } => Some((s, c_s)),
            _ => None,
        }
    }

    /// Unscaled profile value at `r > 0`. The support boundary is treated
    /// with a 1e-12 relative tolerance so that grid distances commensurate
    /// with the scale resolve ties consistently.
    pub fn profile(&self, r: f64) -> f64 {
        assert!(r > 0.0, "kernel profile requested at r <= 0");
        if r > self.support_radius * (1.0 + 1e-12) {
            return 0.0;
        }
        let r = r.min(self.support_radius);
        match &self.family {
            KernelFamily::Indicator => 1.0,
            KernelFamily::SmoothBump => {
                if r >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            }
            KernelFamily::TruncatedFractional { s, c_s } => {
                c_s * r.powf(-(self.dim as f64) - s)
            }
            KernelFamily::Custom { table } => {
                // Constant left of the first sample, linear between samples,
                // zero beyond the last.
                let last = table.last().unwrap();
                if r > last.0 {
                    return 0.0;
                }
                if r <= table[0].0 {
                    return table[0].1;
                }
                let idx = table.partition_point(|&(rr, _)| rr < r);
                let (r0, v0) = table[idx - 1];
                let (r1, v1) = table[idx];
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// Rescaled kernel value `eta_eps(r) = eps^{-d} eta(r/eps)`, `r > 0`.
    pub fn eval(&self, r: f64) -> f64 {
        assert!(r > 0.0, "kernel evaluation requested at r <= 0");
        let e = self.scale;
        let u = r / e;
        if u > self.support_radius * (1.0 + 1e-12) {
            return 0.0;
        }
        self.profile(u) / e.powi(self.dim as i32)
    }

    /// Isotropic pair evaluation; depends only on `|x - y|`.
    pub fn eval_pair(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval(r2.sqrt())
    }

    /// `p`-th moment of the *unscaled* kernel:
    /// `M_p(eta) = d alpha_d int_0^1 r^{d+p-1} eta(r) dr`.
    pub fn moment_unscaled(&self, p: u32) -> Result<f64> {
        let d = self.dim as f64;
        let da = d * unit_ball_volume(self.dim);
        let p = p as f64;
        match &self.family {
            KernelFamily::Indicator => Ok(da / (d + p)),
            KernelFamily::TruncatedFractional { s, c_s } => {
                if p <= *s {
                    return Err(Error::DivergentIntegral(format!(
                        "moment p = {p} diverges for blow-up exponent s = {s}"
                    )));
                }
                Ok(da * c_s / (p - s))
            }
            _ => {
                let f = |r: f64| r.powf(d + p - 1.0) * self.profile(r.max(1e-300));
                integrate(f, 0.0, self.support_radius, 1e-10).map(|v| da * v)
            }
        }
    }

    /// `p`-th moment of the rescaled kernel: `M_p(eta_eps) = eps^p M_p(eta)`.
    pub fn moment(&self, p: u32) -> Result<f64> {
        Ok(self.scale.powi(p as i32) * self.moment_unscaled(p)?)
    }

    /// Tail moment `int 1 ^ |y|^2 eta(|y|) dy` of the unscaled kernel; must be
    /// finite for a valid kernel. With support in `(0,1]` it equals the second
    /// moment restricted to the support, so it reduces to `M_2`.
    pub fn tail_moment(&self) -> Result<f64> {
        match &self.family {
            KernelFamily::TruncatedFractional { s, c_s } => {
                let d = self.dim as f64;
                Ok(d * unit_ball_volume(self.dim) * c_s / (2.0 - s))
            }
            _ => self.moment_unscaled(2),
        }
    }

    /// Whether `int eta(|y|) dy` is finite (decidable per family).
    pub fn is_integrable(&self) -> bool {
        match &self.family {
            KernelFamily::TruncatedFractional { .. } => false,
            _ => true,
        }
    }

    /// Total mass `int eta(|y|) dy = M_0` of the unscaled kernel, when finite.
    pub fn mass_unscaled(&self) -> Result<f64> {
        if !self.is_integrable() {
            return Err(Error::DivergentIntegral(
                "kernel is not integrable near the origin".into(),
            ));
        }
        self.moment_unscaled(0)
    }

    /// Monotonicity of the profile on a sample grid (validation).
    fn check_monotone_sample(&self) -> Result<()> {
        let mut prev = f64::INFINITY;
        for k in 1..=400 {
            let r = k as f64 / 400.0 * self.support_radius;
            let v = self.profile(r);
            if v > prev * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidKernel(format!(
                    "profile increases near r = {r}"
                )));
            }
            prev = v;
        }
        Ok(())
    }

    /// Unscaled `zeta` profile `zeta(r) = int_r^1 s eta(s) ds`.
    pub fn zeta_unscaled(&self, r: f64) -> f64 {
        if r >= self.support_radius {
            return 0.0;
        }
        let r = r.max(0.0);
        match &self.family {
            KernelFamily::Indicator => 0.5 * (1.0 - r * r),
            KernelFamily::TruncatedFractional { s, c_s } => {
                let a = 2.0 - self.dim as f64 - s;
                if a.abs() < 1e-12 {
                    -c_s * r.max(1e-300).ln()
                } else {
                    c_s / a * (1.0 - r.max(0.0).powf(a))
                }
            }
            _ => integrate(|u| u * self.profile(u.max(1e-300)), r, self.support_radius, 1e-12)
                .unwrap_or(0.0),
        }
    }

    /// `zeta` of the rescaled kernel: `zeta_{(eta_eps)}(r) = eps^{2-d} zeta(r/eps)`.
    pub fn zeta(&self, r: f64) -> f64 {
        let e = self.scale;
        e.powf(2.0 - self.dim as f64) * self.zeta_unscaled(r / e)
    }

    /// Builds the normalized `zeta` smoothing kernel (unit total integral),
    /// supported on the ball of radius `scale`.
    pub fn zeta_profile(&self) -> Result<SmoothingKernel> {
        let m2 = self.moment_unscaled(2)?;
        if !(m2.is_finite() && m2 > 0.0) {
            return Err(Error::DivergentIntegral("second moment".into()));
        }
        Ok(SmoothingKernel {
            kind: SmoothingKind::ZetaOf(Box::new(self.clone())),
            dim: self.dim,
            scale: self.scale,
        })
    }

    /// Unnormalized mass of `zeta_{(eta_eps)}`: equals `eps^2 M_2(eta) / d`.
    pub fn zeta_mass(&self) -> Result<f64> {
        Ok(self.scale.powi(2) * self.moment_unscaled(2)? / self.dim as f64)
    }
}

/// Laplace moment `M_N(K) = (N + d - 1)! / (d - 1)!` (exact; log-factorials
/// above `N + d > 20` to avoid overflow).
pub fn laplace_moment(d: usize, n: u32) -> f64 {
    assert!(d >= 1);
    let hi = (n as u64) + (d as u64) - 1;
    let lo = (d as u64) - 1;
    if hi > 20 {
        (ln_factorial(hi) - ln_factorial(lo)).exp()
    } else {
        let mut v = 1.0;
        for k in (lo + 1)..=hi {
            v *= k as f64;
        }
        v
    }
}

/// Laplace normalizer `c_K = 1 / (alpha_d d (d-1)!)`.
pub fn laplace_normalizer(d: usize) -> f64 {
    1.0 / (unit_ball_volume(d) * d as f64 * ln_factorial(d as u64 - 1).exp())
}

/// Laplace moment by radial quadrature (oracle for the factorial formula).
pub fn laplace_moment_quadrature(d: usize, n: u32) -> Result<f64> {
    let dd = d as f64;
    let c = laplace_normalizer(d) * dd * unit_ball_volume(d);
    let f = move |r: f64| (-r).exp() * r.powf(n as f64 + dd - 1.0);
    integrate(f, 0.0, 80.0 + 4.0 * n as f64, 1e-12).map(|v| c * v)
}

/// Smoothing kernel kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SmoothingKind {
    /// `K_s(x) = s^{-d} c_K exp(-|x|/s)`.
    Laplace,
    /// Normalized `zeta` of a jump kernel (compact support of radius `scale`).
    ZetaOf(Box<RadialKernel>),
}

/// A mass-normalized smoothing kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingKernel {
    pub kind: SmoothingKind,
    pub dim: usize,
    pub scale: f64,
}

impl SmoothingKernel {
    pub fn laplace(dim: usize, scale: f64) -> Self {
        SmoothingKernel {
            kind: SmoothingKind::Laplace,
            dim,
            scale,
        }
    }

    /// Pointwise normalized kernel value at radius `r >= 0`.
    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            SmoothingKind::Laplace => {
                let s = self.scale;
                laplace_normalizer(self.dim) / s.powi(self.dim as i32) * (-r / s).exp()
            }
            SmoothingKind::ZetaOf(k) => {
                let norm = k.zeta_mass().unwrap_or(f64::NAN);
                k.zeta(r) / norm
            }
        }
    }

    /// Normalized total mass over `R^d` by radial quadrature (should be 1).
    pub fn total_mass_quadrature(&self) -> Result<f64> {
        let d = self.dim as f64;
        let da = d * unit_ball_volume(self.dim);
        let upper = match &self.kind {
            SmoothingKind::Laplace => self.scale * 100.0,
            SmoothingKind::ZetaOf(_) => self.scale,
        };
        integrate(
            |r| r.powf(d - 1.0) * self.eval(r),
            0.0,
            upper,
            1e-12,
        )
        .map(|v| da * v)
    }

    /// Second moment `int |y|^2 k(|y|) dy` of the normalized kernel.
    pub fn second_moment(&self) -> Result<f64> {
        match &self.kind {
            SmoothingKind::Laplace => Ok(self.scale.powi(2) * laplace_moment(self.dim, 2)),
            SmoothingKind::ZetaOf(k) => {
                // d/(d+2) * M4/M2 * eps^2 for the normalized zeta kernel.
                let d = k.dim as f64;
                Ok(d / (d + 2.0) * k.moment_unscaled(4)? / k.moment_unscaled(2)?
                    * k.scale.powi(2))
            }
        }
    }

    /// Discretizes the kernel on a space as a mass-preserving Markov matrix.
    pub fn discretize(&self, space: &DiscreteSpace) -> Result<Convolution> {
        Convolution::new(self, space)
    }
}

/// A discretized convolution operator on a [`DiscreteSpace`].
///
/// Stores the symmetrically rescaled kernel matrix `kappa` with
/// `sum_j kappa_ij m_j = 1` for every row (Sinkhorn normalization of the raw
/// kernel against the reference masses). Symmetry of `kappa` makes the
/// operator preserve both constants and total mass.
#[derive(Debug, Clone)]
pub struct Convolution {
    n: usize,
    /// Row-major `kappa_ij` (symmetric).
    kappa: Vec<f64>,
    masses: Vec<f64>,
    /// True when the kernel scale is below twice the minimum node spacing.
    pub under_resolved: bool,
}

impl Convolution {
    fn new(kernel: &SmoothingKernel, space: &DiscreteSpace) -> Result<Self> {
        let n = space.len();
        let m = space.ref_masses();
        // Zeta kernels of strongly singular profiles are unbounded at the
        // origin; freeze the diagonal at half the minimum spacing.
        let r_floor = 0.5 * space.min_spacing();
        let eval: Box<dyn Fn(f64) -> f64> = match &kernel.kind {
            SmoothingKind::Laplace => {
                let k = kernel.clone();
                Box::new(move |r| k.eval(r))
            }
            SmoothingKind::ZetaOf(k) => {
                let norm = k.zeta_mass()?;
                let k = (**k).clone();
                Box::new(move |r| k.zeta(r.max(r_floor)) / norm)
            }
        };
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                raw[i * n + j] = eval(space.distance(i, j));
            }
        }
        // Symmetric Sinkhorn scaling: kappa_ij = u_i raw_ij u_j with
        // sum_j kappa_ij m_j = 1 for every i.
        let mut u = vec![1.0; n];
        for _ in 0..1000 {
            let mut max_dev = 0.0f64;
            for i in 0..n {
                let s: f64 = (0..n).map(|j| raw[i * n + j] * u[j] * m[j]).sum();
                if !(s > 0.0) {
                    return Err(Error::InvalidKernel(
                        "kernel row vanishes on the space (scale too small)".into(),
                    ));
                }
                max_dev = max_dev.max((u[i] * s - 1.0).abs());
                u[i] = (u[i] / s).sqrt();
            }
            if max_dev < 1e-14 {
                break;
            }
        }
        let mut kappa = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                kappa[i * n + j] = u[i] * raw[i * n + j] * u[j];
            }
        }
        // Verify row sums.
        for i in 0..n {
            let s: f64 = (0..n).map(|j| kappa[i * n + j] * m[j]).sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidKernel(format!(
                    "kernel normalization failed (row sum {s})"
                )));
            }
        }
        let under_resolved = kernel.scale < 2.0 * space.min_spacing();
        Ok(Convolution {
            n,
            kappa,
            masses: m.to_vec(),
            under_resolved,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Applies the operator to a field of nodal values:
    /// `(S f)_i = sum_j kappa_ij f_j m_j`.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(field.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.kappa[i * n..(i + 1) * n];
            out[i] = row
                .iter()
                .zip(field.iter().zip(self.masses.iter()))
                .map(|(&k, (&f, &m))| k * f * m)
                .sum();
        }
        out
    }

    /// Dense matrix `S[i][j] = kappa_ij m_j` acting on nodal vectors.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = self.kappa[i * n + j] * self.masses[j];
            }
        }
        s
    }

    /// Row `i` of the normalized kernel (the image of a Dirac at node `i`).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.kappa[i * self.n..(i + 1) * self.n].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DiscreteSpace;
    use approx::assert_abs_diff_eq;

    #[test]
    fn indicator_moments_closed_form() {
        let k = RadialKernel::indicator(1, 1.0);
        assert_abs_diff_eq!(k.moment(2).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.moment(0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn moment_scaling_law() {
        let k = RadialKernel::indicator(2, 0.5);
        let unscaled = RadialKernel::indicator(2, 1.0);
        for p in [0u32, 1, 2, 3, 4] {
            let lhs = k.moment(p).unwrap();
            let rhs = 0.5f64.powi(p as i32) * unscaled.moment(p).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn fractional_mass_diverges() {
        let k = RadialKernel::new(
            KernelFamily::TruncatedFractional { s: 0.5, c_s: 1.0 },
            1,
            1.0,
        )
        .unwrap();
        assert!(k.mass_unscaled().is_err());
        assert!(k.moment_unscaled(0).is_err());
        assert!(k.moment_unscaled(2).is_ok());
    }

    #[test]
    fn eval_rescaling() {
        let k = RadialKernel::indicator(1, 1.0);
        assert_abs_diff_eq!(k.eval(0.5), 1.0);
        let k = RadialKernel::indicator(1, 0.5);
        assert_abs_diff_eq!(k.eval(0.3), 2.0);
        assert_abs_diff_eq!(k.eval(0.6), 0.0);
    }

    #[test]
    fn zeta_indicator_closed_form() {
        let k = RadialKernel::indicator(1, 1.0);
        assert_abs_diff_eq!(k.zeta_unscaled(1.0), 0.0);
        assert_abs_diff_eq!(k.zeta_unscaled(0.5), (1.0 - 0.25) / 2.0, epsilon = 1e-14);
        // zeta mass equals M2/d = 2/3.
        assert_abs_diff_eq!(k.zeta_mass().unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let z = k.zeta_profile().unwrap();
        assert_abs_diff_eq!(z.total_mass_quadrature().unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn laplace_moments_match_quadrature() {
        for d in 1..=3 {
            for n in 0..=5 {
                let exact = laplace_moment(d, n);
                let quad = laplace_moment_quadrature(d, n).unwrap();
                assert!(
                    (exact - quad).abs() <= 1e-8 * exact,
                    "d={d} n={n}: {exact} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn laplace_small_values() {
        assert_abs_diff_eq!(laplace_moment(1, 1), 1.0);
        assert_abs_diff_eq!(laplace_moment(1, 2), 2.0);
        assert_abs_diff_eq!(laplace_moment(2, 2), 6.0);
    }

    #[test]
    fn custom_profile_monotonicity_enforced() {
        let bad = RadialKernel::new(
            KernelFamily::Custom {
                table: vec![(0.2, 1.0), (0.5, 2.0)],
            },
            1,
            1.0,
        );
        assert!(bad.is_err());
        let good = RadialKernel::new(
            KernelFamily::Custom {
                table: vec![(0.2, 1.0), (0.5, 0.5), (1.0, 0.0)],
            },
            1,
            1.0,
        );
        assert!(good.is_ok());
    }

    #[test]
    fn convolution_preserves_constants_and_mass() {
        let eta = RadialKernel::indicator(1, 0.3);
        let space = DiscreteSpace::grid(1, 1.0, 21, &eta).unwrap();
        let k = SmoothingKernel::laplace(1, 0.2);
        let conv = k.discretize(&space).unwrap();
        let ones = vec![1.0; space.len()];
        let out = conv.apply(&ones);
        for v in &out {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
        // Mass preservation on a random-ish field.
        let field: Vec<f64> = (0..space.len()).map(|i| ((i * 31 % 7) as f64) + 0.5).collect();
        let before: f64 = field
            .iter()
            .zip(space.ref_masses())
            .map(|(f, m)| f * m)
            .sum();
        let out = conv.apply(&field);
        let after: f64 = out
            .iter()
            .zip(space.ref_masses())
            .map(|(f, m)| f * m)
            .sum();
        assert_abs_diff_eq!(before, after, epsilon = 1e-10 * before.abs());
    }

    #[test]
    fn relative_lipschitz_on_grid() {
        // Smoothed fields obey ln(out(y)/out(x)) <= |y-x|/delta + slack.
        let eta = RadialKernel::indicator(1, 0.3);
        let space = DiscreteSpace::grid(1, 1.0, 41, &eta).unwrap();
        let delta = 0.2;
        let k = SmoothingKernel::laplace(1, delta);
        let conv = k.discretize(&space).unwrap();
        let mut field = vec![0.0; space.len()];
        field[10] = 1.0 / space.ref_masses()[10];
        let out = conv.apply(&field);
        for i in 0..space.len() {
            for j in 0..space.len() {
                let dist = space.distance(i, j);
                if dist <= delta && out[i] > 0.0 && out[j] > 0.0 {
                    let lhs = (out[j] / out[i]).ln();
                    assert!(
                        lhs <= dist / delta + 0.2,
                        "relative Lipschitz violated: {lhs} vs {}",
                        dist / delta
                    );
                    // Multiplicative form of the same estimate.
                    assert!(out[j] <= out[i] * (1.0 + 3.0 * dist / delta) * 1.05);
                }
            }
        }
    }
}
