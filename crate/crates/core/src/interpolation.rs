//! Interpolation means `theta`: symmetric, concave, positively 1-homogeneous
//! functions normalizing `theta(1,1) = 1`, with the boundary value
//! `kappa = theta(1, 0)` and the connectivity constant
//! `C_theta = int_0^1 dr / sqrt(theta(1-r, 1+r))`.

use crate::quadrature::integrate;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Built-in families plus user-supplied means.
#[derive(Clone, Serialize, Deserialize)]
pub enum InterpolationFamily {
    Arithmetic,
    Geometric,
    Logarithmic,
    Harmonic,
    /// A custom mean given by a callable; derivatives by central differences.
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for InterpolationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Arithmetic => write!(f, "Arithmetic"),
            Self::Geometric => write!(f, "Geometric"),
            Self::Logarithmic => write!(f, "Logarithmic"),
            Self::Harmonic => write!(f, "Harmonic"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// An interpolation mean with its cached constants.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub family: InterpolationFamily,
    kappa: f64,
    c_theta: f64,
}

/// Logarithmic mean with continuous extensions `L(a, a) = a`, `L(a, 0) = 0`.
/// Near the diagonal uses the series in `x = (a-b)/(a+b)` of `x / atanh(x)`
/// to avoid cancellation.
fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let s = a + b;
    let x = (a - b) / s;
    if x.abs() < 1e-4 {
        let x2 = x * x;
        0.5 * s * (1.0 - x2 / 3.0 - 4.0 * x2 * x2 / 45.0)
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

impl Interpolation {
    pub fn new(family: InterpolationFamily) -> Result<Self> {
        let mut interp = Interpolation {
            family,
            kappa: 0.0,
            c_theta: 0.0,
        };
        interp.kappa = interp.eval(1.0, 0.0);
        interp.c_theta = interp.compute_c_theta()?;
        Ok(interp)
    }

    pub fn arithmetic() -> Self {
        Self::new(InterpolationFamily::Arithmetic).unwrap()
    }
    pub fn geometric() -> Self {
        Self::new(InterpolationFamily::Geometric).unwrap()
    }
    pub fn logarithmic() -> Self {
        Self::new(InterpolationFamily::Logarithmic).unwrap()
    }
    pub fn harmonic() -> Self {
        Self::new(InterpolationFamily::Harmonic).unwrap()
    }

    /// `theta(a, b)` for `a, b >= 0`.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a >= 0.0 && b >= 0.0, "theta arguments must be nonnegative");
        match &self.family {
            InterpolationFamily::Arithmetic => 0.5 * (a + b),
            InterpolationFamily::Geometric => (a * b).sqrt(),
            InterpolationFamily::Logarithmic => log_mean(a, b),
            InterpolationFamily::Harmonic => {
                if a + b <= 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
            InterpolationFamily::Custom(f) => f(a, b),
        }
    }

    /// Partial derivatives `(d theta / da, d theta / db)` on `a, b > 0`.
    pub fn grad(&self, a: f64, b: f64) -> (f64, f64) {
        match &self.family {
            InterpolationFamily::Arithmetic => (0.5, 0.5),
            InterpolationFamily::Geometric => {
                (0.5 * (b / a).sqrt(), 0.5 * (a / b).sqrt())
            }
            InterpolationFamily::Logarithmic => {
                let x = (a - b) / (a + b);
                if x.abs() < 1e-4 {
                    // Expansion of the exact gradient around the diagonal.
                    let x2 = x * x;
                    (0.5 - x / 3.0 + x2 / 6.0, 0.5 + x / 3.0 + x2 / 6.0)
                } else {
                    let u = a.ln() - b.ln();
                    let da = (u - (a - b) / a) / (u * u);
                    let db = (-u + (a - b) / b) / (u * u);
                    (da, db)
                }
            }
            InterpolationFamily::Harmonic => {
                let s = a + b;
                (2.0 * b * b / (s * s), 2.0 * a * a / (s * s))
            }
            InterpolationFamily::Custom(f) => {
                let h = 1e-6 * (a + b + 1.0);
                (
                    (f(a + h, b) - f((a - h).max(0.0), b)) / (h + (a - (a - h).max(0.0))),
                    (f(a, b + h) - f(a, (b - h).max(0.0))) / (h + (b - (b - h).max(0.0))),
                )
            }
        }
    }

    /// Hessian `[[daa, dab], [dab, dbb]]` on `a, b > 0` (concave, so NSD).
    pub fn hessian(&self, a: f64, b: f64) -> [[f64; 2]; 2] {
        match &self.family {
            InterpolationFamily::Arithmetic => [[0.0, 0.0], [0.0, 0.0]],
            InterpolationFamily::Geometric => {
                let t = (a * b).sqrt();
                [
                    [-0.25 * t / (a * a), 0.25 / t],
                    [0.25 / t, -0.25 * t / (b * b)],
                ]
            }
            InterpolationFamily::Logarithmic => {
                let x = (a - b) / (a + b);
                if x.abs() < 1e-4 {
                    let m = 0.5 * (a + b);
                    let v = 1.0 / (6.0 * m);
                    [[-v, v], [v, -v]]
                } else {
                    let u = a.ln() - b.ln();
                    let d = a - b;
                    let daa =
                        -2.0 / (a * u * u) + d / (a * a * u * u) + 2.0 * d / (a * a * u * u * u);
                    // By symmetry, dbb is daa with the arguments swapped.
                    let dbb = {
                        let u2 = -u;
                        let d2 = -d;
                        -2.0 / (b * u2 * u2)
                            + d2 / (b * b * u2 * u2)
                            + 2.0 * d2 / (b * b * u2 * u2 * u2)
                    };
                    let dab = 1.0 / (b * u * u) + 1.0 / (a * u * u) - 2.0 * d / (a * b * u * u * u);
                    [[daa, dab], [dab, dbb]]
                }
            }
            InterpolationFamily::Harmonic => {
                let s = a + b;
                let s3 = s * s * s;
                [
                    [-4.0 * b * b / s3, 4.0 * a * b / s3],
                    [4.0 * a * b / s3, -4.0 * a * a / s3],
                ]
            }
            InterpolationFamily::Custom(f) => {
                let h = 1e-5 * (a + b + 1.0);
                let daa = (f(a + h, b) - 2.0 * f(a, b) + f((a - h).max(1e-12), b)) / (h * h);
                let dbb = (f(a, b + h) - 2.0 * f(a, b) + f(a, (b - h).max(1e-12))) / (h * h);
                let dab = (f(a + h, b + h) - f(a + h, (b - h).max(1e-12))
                    - f((a - h).max(1e-12), b + h)
                    + f((a - h).max(1e-12), (b - h).max(1e-12)))
                    / (4.0 * h * h);
                [[daa, dab], [dab, dbb]]
            }
        }
    }

    /// Boundary value `kappa = theta(1, 0)`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Connectivity constant `C_theta = int_0^1 dr / sqrt(theta(1-r, 1+r))`.
    pub fn c_theta(&self) -> f64 {
        self.c_theta
    }

    fn compute_c_theta(&self) -> Result<f64> {
        if matches!(self.family, InterpolationFamily::Arithmetic) {
            return Ok(1.0);
        }
        if self.kappa > 0.0 {
            return integrate(|r| 1.0 / self.eval(1.0 - r, 1.0 + r).sqrt(), 0.0, 1.0, 1e-8);
        }
        // theta(0, 2) = 0: substitute r = 1 - u^2 so the endpoint singularity
        // becomes integrable for any theta vanishing at worst linearly.
        let f = |u: f64| {
            let r = 1.0 - u * u;
            let th = self.eval(1.0 - r, 1.0 + r);
            if th <= 0.0 {
                return 0.0;
            }
            2.0 * u / th.sqrt()
        };
        let v = integrate(f, 0.0, 1.0, 1e-8)?;
        if !v.is_finite() {
            return Err(Error::DivergentIntegral(
                "connectivity constant C_theta".into(),
            ));
        }
        Ok(v)
    }

    /// Randomized check of the structural assumptions; all built-in families
    /// pass every item.
    pub fn check_assumptions(&self, n_samples: usize, seed: u64) -> AssumptionReport {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut report = AssumptionReport::default();
        let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            // Mix of scales, including small values near the boundary.
            let u: f64 = rng.gen();
            (10.0f64).powf(-4.0 + 5.0 * u)
        };
        for _ in 0..n_samples {
            let (a, b) = (sample(&mut rng), sample(&mut rng));
            let lam: f64 = 0.1 + 2.0 * rng.gen::<f64>();
            let th = self.eval(a, b);
            if th <= 0.0 || !th.is_finite() {
                report.positivity.record_failure((a, b));
            }
            if (self.eval(a, b) - self.eval(b, a)).abs() > 1e-12 * th.abs().max(1e-12) {
                report.symmetry.record_failure((a, b));
            }
            let hom = self.eval(lam * a, lam * b);
            if (hom - lam * th).abs() > 1e-10 * lam * (a + b) {
                report.homogeneity.record_failure((a, b));
            }
            // Monotonicity in the first argument.
            let a2 = a * (1.0 + 0.5 * rng.gen::<f64>());
            if self.eval(a2, b) < th - 1e-12 * th.abs().max(1e-12) {
                report.monotonicity.record_failure((a, b));
            }
            // Midpoint concavity.
            let (c, d) = (sample(&mut rng), sample(&mut rng));
            let mid = self.eval(0.5 * (a + c), 0.5 * (b + d));
            if mid + 1e-10 * (th + self.eval(c, d)) < 0.5 * (th + self.eval(c, d)) {
                report.concavity.record_failure((a, b));
            }
            // Upper bound by the arithmetic mean.
            if th > 0.5 * (a + b) + 1e-10 * (a + b) {
                report.arithmetic_bound.record_failure((a, b));
            }
            // C1 regularity probe: one-sided difference quotients must agree.
            // Symmetric means can only kink on the diagonal, so probe both at
            // the sample and across (a, a).
            let h = 1e-7 * (a + b);
            let right = (self.eval(a + h, b) - th) / h;
            let left = (th - self.eval((a - h).max(0.0), b)) / h;
            if (right - left).abs() > 1e-2 * (right.abs() + left.abs() + 1.0) {
                report.regularity.record_failure((a, b));
            }
            let hd = 1e-7 * a;
            let td = self.eval(a, a);
            let right = (self.eval(a + hd, a) - td) / hd;
            let left = (td - self.eval(a - hd, a)) / hd;
            if (right - left).abs() > 1e-2 * (right.abs() + left.abs() + 1.0) {
                report.regularity.record_failure((a, a));
            }
        }
        if (self.eval(1.0, 1.0) - 1.0).abs() > 1e-12 {
            report.normalization.record_failure((1.0, 1.0));
        }
        report
    }
}

/// Outcome of one checked property.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PropertyCheck {
    pub failures: usize,
    pub first_counterexample: Option<(f64, f64)>,
}

impl PropertyCheck {
    fn record_failure(&mut self, at: (f64, f64)) {
        self.failures += 1;
        if self.first_counterexample.is_none() {
            self.first_counterexample = Some(at);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Per-assumption randomized report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AssumptionReport {
    pub regularity: PropertyCheck,
    pub symmetry: PropertyCheck,
    pub positivity: PropertyCheck,
    pub normalization: PropertyCheck,
    pub monotonicity: PropertyCheck,
    pub homogeneity: PropertyCheck,
    pub concavity: PropertyCheck,
    pub arithmetic_bound: PropertyCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.regularity.passed()
            && self.symmetry.passed()
            && self.positivity.passed()
            && self.normalization.passed()
            && self.monotonicity.passed()
            && self.homogeneity.passed()
            && self.concavity.passed()
            && self.arithmetic_bound.passed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basic_values() {
        let ar = Interpolation::arithmetic();
        assert_abs_diff_eq!(ar.eval(2.0, 4.0), 3.0);
        let lo = Interpolation::logarithmic();
        assert_abs_diff_eq!(lo.eval(1.0, 1.0), 1.0);
        assert_abs_diff_eq!(
            lo.eval(1.0, std::f64::consts::E),
            std::f64::consts::E - 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kappa_values() {
        assert_abs_diff_eq!(Interpolation::arithmetic().kappa(), 0.5);
        assert_abs_diff_eq!(Interpolation::geometric().kappa(), 0.0);
        assert_abs_diff_eq!(Interpolation::logarithmic().kappa(), 0.0);
        assert_abs_diff_eq!(Interpolation::harmonic().kappa(), 0.0);
    }

    #[test]
    fn c_theta_values() {
        // Frozen from an independent quadrature of the defining integral.
        assert_abs_diff_eq!(Interpolation::arithmetic().c_theta(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            Interpolation::geometric().c_theta(),
            1.198140234736,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            Interpolation::logarithmic().c_theta(),
            1.102172608825,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            Interpolation::harmonic().c_theta(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-7
        );
        // C_theta >= 1 always (theta is below the arithmetic mean).
        for interp in [
            Interpolation::arithmetic(),
            Interpolation::geometric(),
            Interpolation::logarithmic(),
            Interpolation::harmonic(),
        ] {
            assert!(interp.c_theta() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn builtins_pass_assumptions() {
        for interp in [
            Interpolation::arithmetic(),
            Interpolation::geometric(),
            Interpolation::logarithmic(),
            Interpolation::harmonic(),
        ] {
            let report = interp.check_assumptions(1000, 7);
            assert!(report.all_passed(), "{:?}: {report:?}", interp.family);
        }
    }

    #[test]
    fn custom_min_fails_regularity_only() {
        let min = Interpolation::new(InterpolationFamily::Custom(Arc::new(|a, b| a.min(b))))
            .unwrap();
        let report = min.check_assumptions(2000, 11);
        assert!(!report.regularity.passed(), "min has a kink on the diagonal");
        assert!(report.symmetry.passed());
        assert!(report.homogeneity.passed());
        assert!(report.concavity.passed());
    }

    #[test]
    fn custom_product_fails_homogeneity() {
        let prod =
            Interpolation::new(InterpolationFamily::Custom(Arc::new(|a, b| a * b))).unwrap();
        let report = prod.check_assumptions(500, 3);
        assert!(!report.homogeneity.passed());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for interp in [
            Interpolation::geometric(),
            Interpolation::logarithmic(),
            Interpolation::harmonic(),
        ] {
            for &(a, b) in &[(0.5, 2.0), (1.0, 1.0), (3.0, 0.01), (2.0, 1.9999)] {
                let (da, db) = interp.grad(a, b);
                let h = 1e-7;
                let fa = (interp.eval(a + h, b) - interp.eval(a - h, b)) / (2.0 * h);
                let fb = (interp.eval(a, b + h) - interp.eval(a, b - h)) / (2.0 * h);
                assert_abs_diff_eq!(da, fa, epsilon = 1e-5);
                assert_abs_diff_eq!(db, fb, epsilon = 1e-5);
                let hh = interp.hessian(a, b);
                let faa = (interp.grad(a + h, b).0 - interp.grad(a - h, b).0) / (2.0 * h);
                let fab = (interp.grad(a, b + h).0 - interp.grad(a, b - h).0) / (2.0 * h);
                let fbb = (interp.grad(a, b + h).1 - interp.grad(a, b - h).1) / (2.0 * h);
                assert_abs_diff_eq!(hh[0][0], faa, epsilon = 2e-4 * (1.0 + faa.abs()));
                assert_abs_diff_eq!(hh[0][1], fab, epsilon = 2e-4 * (1.0 + fab.abs()));
                assert_abs_diff_eq!(hh[1][1], fbb, epsilon = 2e-4 * (1.0 + fbb.abs()));
            }
        }
    }

    #[test]
    fn log_mean_series_is_smooth_across_threshold() {
        let lo = Interpolation::logarithmic();
        // Values straddling the series switch must agree to high accuracy.
        let a = 1.0;
        for &db in &[1e-5, 5e-5, 9.9e-5, 1.01e-4, 2e-4] {
            let b = a * (1.0 + db);
            let v = lo.eval(a, b);
            let exact = (a - b) / (a.ln() - b.ln());
            assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
        }
    }
}
