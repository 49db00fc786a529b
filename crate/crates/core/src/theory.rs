//! Closed-form limits of the memory process.
//!
//! Constants, the drift of `W(z,·)`, the quadratic-variation integrands of
//! `X(z0,·)` and `N`, and the CDFs of the limit laws that the ensembles are
//! tested against. Everything here is a pure function.

use std::f64::consts::{E, PI, SQRT_2};

use serde::Serialize;

use crate::error::DomainError;

/// Critical level `1 - 1/e`.
pub const Z0: f64 = 1.0 - 1.0 / E;

/// `s(1,n)/n -> 1/e`.
pub const MEAN_RATE: f64 = 1.0 / E;

/// Quadratic-variation rate of `X(z0,·)`.
pub const X_QVAR: f64 = 2.0;

/// Quadratic-variation rate of `N`.
pub const N_QVAR: f64 = 3.0 - E;

/// `Var(s(1,n) - n/e) / n -> (3-e)/e^2`.
pub fn clt_variance() -> f64 {
    (3.0 - E) / (E * E)
}

/// Brownian coefficient of the centered size, `sqrt(3-e)/e`.
pub fn clt_coeff() -> f64 {
    (3.0 - E).sqrt() / E
}

/// Scale `sqrt(2)/e` of the `(L, R)` limit.
pub fn lr_scale() -> f64 {
    SQRT_2 / E
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryModel {
    pub z0: f64,
    pub mean_rate: f64,
    pub clt_coeff: f64,
    pub lr_scale: f64,
    pub x_qvar: f64,
    pub n_qvar: f64,
}

impl Default for TheoryModel {
    fn default() -> Self {
        Self {
            z0: Z0,
            mean_rate: MEAN_RATE,
            clt_coeff: clt_coeff(),
            lr_scale: lr_scale(),
            x_qvar: X_QVAR,
            n_qvar: N_QVAR,
        }
    }
}

impl TheoryModel {
    /// Named constants in a fixed order, for tables.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("z0", self.z0),
            ("mean_rate", self.mean_rate),
            ("clt_coeff", self.clt_coeff),
            ("clt_variance", self.clt_coeff * self.clt_coeff),
            ("lr_scale", self.lr_scale),
            ("x_qvar", self.x_qvar),
            ("n_qvar", self.n_qvar),
        ]
    }
}

/// Conditional mean increment of `W(z,·)` while `S(z,·)` is nonempty:
/// `-ln(1-z) - 1`. Zero exactly at `z0`.
pub fn drift(z: f64) -> Result<f64, DomainError> {
    if !(0.0..1.0).contains(&z) {
        return Err(DomainError::OutOfDomain {
            what: "drift",
            value: z,
            domain: "[0, 1)",
        });
    }
    Ok(-(-z).ln_1p() - 1.0)
}

fn check_critical_range(what: &'static str, m: f64) -> Result<(), DomainError> {
    if (0.0..=Z0).contains(&m) {
        Ok(())
    } else {
        Err(DomainError::OutOfDomain {
            what,
            value: m,
            domain: "[0, 1-1/e]",
        })
    }
}

/// `E[(X(z0,k+1) - X(z0,k))^2 | m_k = m]` for `m <= z0`:
/// `e - 1 - (2 ln(1-m) + 1)/(1-m)`.
pub fn qvar_integrand_x(m: f64) -> Result<f64, DomainError> {
    check_critical_range("qvar_integrand_x", m)?;
    Ok(qvar_integrand_x_unchecked(m))
}

#[inline]
pub fn qvar_integrand_x_unchecked(m: f64) -> f64 {
    let g = 1.0 - m;
    E - 1.0 - (2.0 * (-m).ln_1p() + 1.0) / g
}

/// `E[(N_{k+1} - N_k)^2 | m_k = m]` for `m <= z0`:
/// `(-2 ln(1-m) - 3)/(1-m) + 2e - 2`.
pub fn qvar_integrand_n(m: f64) -> Result<f64, DomainError> {
    check_critical_range("qvar_integrand_n", m)?;
    Ok(qvar_integrand_n_unchecked(m))
}

#[inline]
pub fn qvar_integrand_n_unchecked(m: f64) -> f64 {
    let g = 1.0 - m;
    (-2.0 * (-m).ln_1p() - 3.0) / g + 2.0 * E - 2.0
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(sqrt(2)/e |N| <= x)` for standard normal `N`, i.e. `erf(x e / 2)`.
pub fn half_normal_scaled_cdf(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 0.0;
    }
    libm::erf(x * E / 2.0)
}

/// Limit density of `(L_n + R_n)/sqrt(n)`: `e^3 x^2 / (2 sqrt(pi)) exp(-e^2 x^2 / 4)`.
pub fn symdiff_limit_density(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    E.powi(3) * x * x / (2.0 * PI.sqrt()) * (-E * E * x * x / 4.0).exp()
}

/// CDF of [`symdiff_limit_density`], in closed form:
/// `erf(e x/2) - (e x/sqrt(pi)) exp(-e^2 x^2/4)`.
pub fn symdiff_limit_cdf(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 0.0;
    }
    let u = E * x / 2.0;
    if u > 30.0 {
        return 1.0;
    }
    // for small u the two terms cancel to O(u^3); use the series instead
    if u < 1e-3 {
        let u2 = u * u;
        return 4.0 / (3.0 * PI.sqrt()) * u2 * u * (1.0 - 0.6 * u2 + 3.0 / 14.0 * u2 * u2);
    }
    libm::erf(u) - 2.0 * u / PI.sqrt() * (-u * u).exp()
}

/// `exp(t^2) erfc(t)` for large `t` (asymptotic series, t >= 20).
fn erfcx_large(t: f64) -> f64 {
    let r = 1.0 / (2.0 * t * t);
    let series = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r.powi(4);
    series / (t * PI.sqrt())
}

/// `P(sup_{s<=1} (B_s + mu s) <= a) = Phi(a - mu) - exp(2 mu a) Phi(-a - mu)`.
pub fn drifted_max_cdf(a: f64, mu: f64) -> f64 {
    if a.is_nan() || a <= 0.0 {
        return 0.0;
    }
    if a == f64::INFINITY {
        return 1.0;
    }
    let head = normal_cdf(a - mu);
    let t = (a + mu) / SQRT_2;
    let tail = if t < 20.0 {
        let phi = 0.5 * libm::erfc(t);
        let growth = (2.0 * mu * a).exp();
        if phi == 0.0 {
            0.0
        } else {
            growth * phi
        }
    } else {
        // exp(2 mu a) erfc(t)/2 = erfcx(t) exp(-(a-mu)^2/2)/2
        0.5 * erfcx_large(t) * (-(a - mu) * (a - mu) / 2.0).exp()
    };
    (head - tail).clamp(0.0, 1.0)
}

/// Limit CDF of `s(z0 + y n^{-1/2}, n)/sqrt(n)`: the law of
/// `(sqrt(2)/e) sup_{s<=1}(B_s + mu s)` with `mu = y e / sqrt(2)`.
pub fn profile_limit_cdf(x: f64, y: f64) -> f64 {
    let scale = lr_scale();
    drifted_max_cdf(x / scale, y / scale)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, m, fm, whole, tol, 50)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constants() {
        assert!(close(Z0, 0.632120558829, 1e-12));
        assert!(close(MEAN_RATE, 0.367879441171, 1e-12));
        // the two printed forms of the size variance agree
        assert!(close(clt_variance(), 3.0 * E.powi(-2) - 1.0 / E, 1e-15));
        assert!(close(clt_coeff() * clt_coeff(), clt_variance(), 1e-15));
        assert!(close(clt_variance(), 0.038126, 1e-6));
        assert!(close(lr_scale(), 0.520260, 1e-6));
    }

    #[test]
    fn drift_values() {
        assert!(drift(Z0).unwrap().abs() < 1e-12);
        assert_eq!(drift(0.0).unwrap(), -1.0);
        assert!(close(drift(1.0 - (-2.0f64).exp()).unwrap(), 1.0, 1e-12));
        assert!(drift(1.0).is_err());
        assert!(drift(-0.1).is_err());
    }

    #[test]
    fn drift_increasing_with_single_sign_change() {
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&z| drift(z).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        for (&z, &d) in grid.iter().zip(&vals) {
            assert_eq!(d < 0.0, z < Z0, "sign at {z}");
        }
    }

    #[test]
    fn qvar_integrand_endpoints() {
        assert!(close(qvar_integrand_x(0.0).unwrap(), E - 2.0, 1e-12));
        assert!(close(qvar_integrand_x(Z0).unwrap(), 2.0 * E - 1.0, 1e-12));
        assert!(close(qvar_integrand_n(0.0).unwrap(), 2.0 * E - 5.0, 1e-12));
        assert!(close(qvar_integrand_n(Z0).unwrap(), E - 2.0, 1e-12));
        assert!(qvar_integrand_x(Z0 + 1e-9).is_err());
        assert!(qvar_integrand_n(-1e-9).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        // 0.5 (1 + erf(1/sqrt 2)), erf(1/sqrt 2) = 0.682689492137086
        assert!(close(normal_cdf(1.0), 0.841344746068543, 1e-12));
        assert!(close(normal_cdf(-1.0), 0.158655253931457, 1e-12));
    }

    #[test]
    fn half_normal_median() {
        // bisection on erf(x e/2) = 1/2, independent of the closed form's inverse
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if libm::erf(mid * E / 2.0) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(close(lo, 0.350909, 2e-6), "median {lo}");
        assert!(close(half_normal_scaled_cdf(lo), 0.5, 1e-12));
        assert_eq!(half_normal_scaled_cdf(0.0), 0.0);
        assert_eq!(half_normal_scaled_cdf(-1.0), 0.0);
        assert_eq!(half_normal_scaled_cdf(50.0), 1.0);
    }

    #[test]
    fn symdiff_cdf_matches_quadrature_of_density() {
        for &x in &[1e-4, 0.01, 0.1, 0.5, 0.830215, 1.0, 1.5, 2.5, 4.0] {
            let q = integrate(symdiff_limit_density, 0.0, x, 1e-13);
            assert!(close(symdiff_limit_cdf(x), q, 1e-10), "x={x}");
        }
        assert_eq!(symdiff_limit_cdf(0.0), 0.0);
        assert_eq!(symdiff_limit_cdf(-2.0), 0.0);
        assert!(close(symdiff_limit_cdf(20.0), 1.0, 1e-15));
    }

    #[test]
    fn symdiff_mean() {
        let mean = integrate(|x| x * symdiff_limit_density(x), 0.0, 12.0, 1e-12);
        assert!(close(mean, 4.0 / (E * PI.sqrt()), 1e-9));
        assert!(close(mean, 0.830215, 1e-6));
        // E(2 M_1 - B_1) = 2 E M_1 = 2 sqrt(2/pi), scaled by sqrt(2)/e
        assert!(close(mean, lr_scale() * 2.0 * (2.0 / PI).sqrt(), 1e-9));
    }

    #[test]
    fn symdiff_density_is_scaled_chi3() {
        let chi3 = |y: f64| 2.0 * y * y / (2.0 * PI).sqrt() * (-y * y / 2.0).exp();
        let c = lr_scale();
        for i in 1..100 {
            let x = i as f64 * 0.03;
            assert!(close(symdiff_limit_density(x), chi3(x / c) / c, 1e-12));
        }
    }

    #[test]
    fn drifted_max_without_drift_is_reflection_half_normal() {
        for i in 0..=400 {
            let a = i as f64 * 0.02;
            let expect = libm::erf(a / SQRT_2);
            assert!(close(drifted_max_cdf(a, 0.0), expect, 1e-10), "a={a}");
            assert!(close(
                drifted_max_cdf(a, 0.0),
                normal_cdf(a) - normal_cdf(-a),
                1e-12
            ));
        }
    }

    #[test]
    fn drifted_max_edges() {
        for mu in [-3.0, -1.0, 0.0, 1.0, 3.84] {
            assert_eq!(drifted_max_cdf(0.0, mu), 0.0);
            assert_eq!(drifted_max_cdf(-1.0, mu), 0.0);
            assert!(close(drifted_max_cdf(60.0, mu), 1.0, 1e-12));
            let mut prev = 0.0;
            for i in 0..=300 {
                let v = drifted_max_cdf(i as f64 * 0.05, mu);
                assert!(v >= prev - 1e-15 && (0.0..=1.0).contains(&v));
                prev = v;
            }
        }
        // both branches of the tail term agree near the switch
        let (a, mu) = (14.0, 14.28);
        let direct =
            normal_cdf(a - mu) - (2.0 * mu * a).exp() * 0.5 * libm::erfc((a + mu) / SQRT_2);
        assert!(close(drifted_max_cdf(a, mu), direct, 1e-9));
        // far-out case where the naive product over/underflows
        let v = drifted_max_cdf(40.0, 40.0);
        assert!(v.is_finite() && close(v, 0.5, 0.01));
    }

    #[test]
    fn qvar_integrals_reproduce_rates() {
        let ix = integrate(
            |x| qvar_integrand_x_unchecked(x) / (1.0 - x),
            0.0,
            Z0,
            1e-12,
        );
        let inn = integrate(
            |x| qvar_integrand_n_unchecked(x) / (1.0 - x),
            0.0,
            Z0,
            1e-12,
        );
        assert!(close(ix, X_QVAR, 1e-8), "{ix}");
        assert!(close(inn, N_QVAR, 1e-8), "{inn}");
    }

    #[test]
    fn integrate_polynomial_and_gaussian() {
        assert!(close(integrate(|x| x * x, 0.0, 3.0, 1e-12), 9.0, 1e-12));
        let g = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-13);
        assert!(close(g, PI.sqrt(), 1e-11));
    }
}
