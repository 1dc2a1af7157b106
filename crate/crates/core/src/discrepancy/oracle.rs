//! Quadrature ground truth for the discrepancy function.
//!
//! Everything here integrates products of the unnormalised prior kernel
//! g(t) = exp(-c |t|^ν), c = λ_ν^-ν, with a Gaussian noise kernel. The
//! integrands are evaluated relative to their peak so that nothing underflows
//! even when the discrepancy itself is in the millions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ggd::{GgdParams, NU_MAX, NU_MIN};
use crate::quadrature::{integrate, Tolerance};

/// Relative accuracy requested from every integral.
pub const ORACLE_REL_TOL: f64 = 1e-10;

// Beyond this drop of the log-integrand the contribution is below 1e-326.
const LOG_CUTOFF: f64 = 750.0;

fn tolerance() -> Tolerance {
    Tolerance {
        relative: ORACLE_REL_TOL,
        ..Tolerance::default()
    }
}

fn check_inputs(x: f64, sigma: f64, lambda: f64, nu: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("discrepancy needs finite x, got {x}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    if !(NU_MIN..=NU_MAX).contains(&nu) {
        return Err(Error::InvalidParameter(format!(
            "shape must lie in [{NU_MIN}, {NU_MAX}], got {nu}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prior scale must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// The convolution kernel in the log domain for fixed (x, σ, λ_ν, ν), x ≥ 0:
/// L(t) = -(x - t)² / 2σ² - c |t|^ν.
struct Kernel {
    x: f64,
    sigma: f64,
    nu: f64,
    c: f64,
    lambda_nu: f64,
}

impl Kernel {
    fn log(&self, t: f64) -> f64 {
        let d = self.x - t;
        -d * d / (2.0 * self.sigma * self.sigma) - self.c * t.abs().powf(self.nu)
    }

    fn dlog(&self, t: f64) -> f64 {
        (self.x - t) / (self.sigma * self.sigma) - self.c * self.nu * t.powf(self.nu - 1.0)
    }

    // Root of dlog on (lo, hi) with dlog(lo) > 0 > dlog(hi).
    fn bisect(&self, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.dlog(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Local maxima of L on [0, x]: always a candidate at 0 (a cusp for ν ≤ 1),
    /// plus at most one interior stationary point.
    fn interior_peak(&self) -> Option<f64> {
        if self.x == 0.0 {
            return None;
        }
        let s2 = self.sigma * self.sigma;
        if self.nu >= 1.0 {
            let slope0 = if self.nu == 1.0 {
                self.x / s2 - self.c
            } else {
                self.x / s2
            };
            (slope0 > 0.0).then(|| self.bisect(0.0, self.x))
        } else {
            // L is convex below t_c and concave above it.
            let t_c = (self.c * self.nu * (1.0 - self.nu) * s2).powf(1.0 / (2.0 - self.nu));
            (t_c < self.x && self.dlog(t_c) > 0.0).then(|| self.bisect(t_c, self.x))
        }
    }

    /// ln ∫ exp L(t) dt.
    fn log_integral(&self) -> Result<f64> {
        let interior = self.interior_peak();
        let peak = match interior {
            Some(t) if self.log(t) > self.log(0.0) => t,
            _ => 0.0,
        };
        let (x, s2, c, nu) = (self.x, self.sigma * self.sigma, self.c, self.nu);
        let peak_log = self.log(peak);
        let peak_pow = peak.powf(nu);
        let offset = x - peak;
        // Integrate in s = t - peak so that L(t) - L(peak) keeps full relative
        // precision even when the peak sits at |t| ~ 1e6.
        let rel = |s: f64| {
            let t = peak + s;
            let dpow = if peak > 0.0 && t > 0.0 {
                peak_pow * (nu * (s / peak).ln_1p()).exp_m1()
            } else {
                t.abs().powf(nu) - peak_pow
            };
            s * (2.0 * offset - s) / (2.0 * s2) - c * dpow
        };

        // L(t) - L(0) <= min(-t²/2σ², -c|t|^ν) for t < 0, and
        // L(t) - L(x) <= min(-(t-x)²/2σ², -c(t^ν - x^ν)) for t > x.
        let gauss_reach = self.sigma * (2.0 * LOG_CUTOFF).sqrt();
        let lo = -gauss_reach.min(self.lambda_nu * LOG_CUTOFF.powf(1.0 / nu));
        let hi = x + gauss_reach.min((x.powf(nu) + LOG_CUTOFF / c).powf(1.0 / nu) - x);

        let mut pts = vec![lo, hi, 0.0, x];
        let mut centers = vec![x];
        if let Some(t) = interior {
            pts.push(t);
            centers.push(t);
        }
        for &k in &[1.0, 5.0, 10.0, 40.0] {
            for &m in &centers {
                pts.push(m - k * self.sigma);
                pts.push(m + k * self.sigma);
            }
        }
        for &k in &[0.01, 0.1, 1.0, 10.0, 100.0] {
            pts.push(k * self.lambda_nu);
            pts.push(-k * self.lambda_nu);
        }
        let pts: Vec<f64> = clean_breakpoints(pts, lo, hi).into_iter().map(|t| t - peak).collect();
        let pts = clean_breakpoints(pts, f64::NEG_INFINITY, f64::INFINITY);
        let r = integrate(|s| rel(s).exp(), &pts, tolerance())?;
        Ok(peak_log + r.value.ln())
    }
}

fn clean_breakpoints(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|p| p.is_finite() && *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn kernel(x: f64, sigma: f64, p: &GgdParams) -> Kernel {
    Kernel {
        x: x.abs(),
        sigma,
        nu: p.nu(),
        c: p.lambda_nu().powf(-p.nu()),
        lambda_nu: p.lambda_nu(),
    }
}

// -ln of the constants in front of ∫ exp L: κ/(2λ_ν) · 1/(√(2π) σ).
fn log_constant(sigma: f64, p: &GgdParams) -> f64 {
    (p.kappa() / (2.0 * p.lambda_nu())).ln() - 0.5 * (2.0 * PI).ln() - sigma.ln()
}

/// f(x) = -ln ∫ GGD(x - t; λ, ν) N(t; 0, σ²) dt by adaptive quadrature.
pub fn discrepancy_oracle(x: f64, sigma: f64, lambda: f64, nu: f64) -> Result<f64> {
    check_inputs(x, sigma, lambda, nu)?;
    let p = GgdParams::new(lambda, nu)?;
    let ln_j = kernel(x, sigma, &p).log_integral()?;
    Ok(-(log_constant(sigma, &p) + ln_j))
}

/// Quadrature evaluation of the log-discrepancy φ(x) = ln(f(x) - f(0)) at
/// unit noise, together with the constants that only depend on (λ, ν).
///
/// For small x the difference f(x) - f(0) is computed from an integral of the
/// difference of the two convolutions rather than by subtracting two nearly
/// equal discrepancies.
#[derive(Debug, Clone)]
pub struct LogDiscrepancyOracle {
    params: GgdParams,
    c: f64,
    ln_j0: f64,
    gamma0: f64,
    beta1: f64,
    beta2: f64,
}

impl LogDiscrepancyOracle {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        check_inputs(0.0, 1.0, lambda, nu)?;
        let p = GgdParams::new(lambda, nu)?;
        let c = p.lambda_nu().powf(-nu);
        let ln_j0 = kernel(0.0, 1.0, &p).log_integral()?;
        let gamma0 = -(log_constant(1.0, &p) + ln_j0);

        // 1 - M₂ = ν E_q[(|t|/λ_ν)^ν] with q ∝ exp(-t²/2 - c|t|^ν); this form
        // avoids the cancellation in 1 - M₂ when the prior is much wider
        // than the noise.
        let reach = (2.0 * LOG_CUTOFF).sqrt().min(p.lambda_nu() * LOG_CUTOFF.powf(1.0 / nu));
        let pts = half_line_points(0.0, reach, p.lambda_nu());
        let base = |t: f64| (-0.5 * t * t - c * t.powf(nu)).exp();
        let num = integrate(|t| c * t.powf(nu) * base(t), &pts, tolerance())?;
        let den = integrate(base, &pts, tolerance())?;
        let beta1 = -std::f64::consts::LN_2 + (nu * num.value / den.value).ln();
        let beta2 = -nu * p.lambda_nu().ln();

        Ok(LogDiscrepancyOracle {
            params: p,
            c,
            ln_j0,
            gamma0,
            beta1,
            beta2,
        })
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    /// Direct ratio 1 - E_q[t²]; used to cross-check [`Self::beta1`].
    pub fn one_minus_second_moment(&self) -> Result<f64> {
        let (c, nu) = (self.c, self.params.nu());
        let reach = (2.0 * LOG_CUTOFF).sqrt().min(self.params.lambda_nu() * LOG_CUTOFF.powf(1.0 / nu));
        let pts = half_line_points(0.0, reach, self.params.lambda_nu());
        let base = |t: f64| (-0.5 * t * t - c * t.powf(nu)).exp();
        let m2 = integrate(|t| t * t * base(t), &pts, tolerance())?;
        let den = integrate(base, &pts, tolerance())?;
        Ok(1.0 - m2.value / den.value)
    }

    /// f(x) - f(0) at unit noise.
    pub fn excess(&self, x: f64) -> Result<f64> {
        let x = x.abs();
        if !x.is_finite() {
            return Err(Error::Domain(format!("discrepancy needs finite x, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let nu = self.params.nu();
        let estimate = (self.beta1.exp() * x * x).min(self.beta2.exp() * x.powf(nu));
        if estimate < 0.5 {
            let d = self.difference_integral(x)?;
            Ok(-(d * (-self.ln_j0).exp()).ln_1p())
        } else {
            let ln_j = kernel(x, 1.0, &self.params).log_integral()?;
            Ok(self.ln_j0 - ln_j)
        }
    }

    /// φ(x) = ln(f(x) - f(0)) at unit noise.
    pub fn phi(&self, x: f64) -> Result<f64> {
        Ok(self.excess(x)?.ln())
    }

    // J(x) - J(0) where J(x) = ∫ g(t) exp(-(x - t)²/2) dt.
    fn difference_integral(&self, x: f64) -> Result<f64> {
        let (c, nu, lambda_nu) = (self.c, self.params.nu(), self.params.lambda_nu());
        let r = if nu >= 1.0 && lambda_nu > 1.0 {
            // The prior is the smoother factor: take its second difference
            // against the fixed Gaussian.
            let reach = (2.0 * LOG_CUTOFF).sqrt();
            let mut pts = half_line_points(0.0, reach, lambda_nu);
            pts.push(x.min(reach));
            let pts = clean_breakpoints(pts, 0.0, reach);
            let delta = move |s: f64, sign: f64| -> f64 {
                let d = s + sign * x;
                if s > 0.0 && d > 0.0 {
                    s.powf(nu) * (nu * (sign * x / s).ln_1p()).exp_m1()
                } else {
                    d.abs().powf(nu) - s.powf(nu)
                }
            };
            integrate(
                |s| {
                    let base = (-0.5 * s * s - c * s.powf(nu)).exp();
                    base * 0.5 * ((-c * delta(s, 1.0)).exp_m1() + (-c * delta(s, -1.0)).exp_m1())
                },
                &pts,
                tolerance(),
            )?
        } else {
            // The Gaussian is the smoother factor.
            let reach = (x + (2.0 * LOG_CUTOFF).sqrt()).min(lambda_nu * LOG_CUTOFF.powf(1.0 / nu));
            let mut pts = half_line_points(0.0, reach, lambda_nu);
            for k in [0.0, 1.0, 5.0, 10.0] {
                pts.push(x + k);
                pts.push(x - k);
            }
            let pts = clean_breakpoints(pts, 0.0, reach);
            let half_x2 = 0.5 * x * x;
            let em = (-half_x2).exp_m1();
            integrate(
                |s| {
                    let g = (-c * s.powf(nu)).exp();
                    let xs = x * s;
                    if xs + half_x2 <= 1.0 {
                        let sh = (0.5 * xs).sinh();
                        g * (-0.5 * s * s).exp() * (em * xs.cosh() + 2.0 * sh * sh)
                    } else {
                        let a = s - x;
                        let b = s + x;
                        g * (0.5 * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp()) - (-0.5 * s * s).exp())
                    }
                },
                &pts,
                tolerance(),
            )?
        };
        Ok(2.0 * r.value)
    }
}

// Breakpoints for integrals over [lo, hi] of products of a unit Gaussian and a
// prior of scale lambda_nu.
fn half_line_points(lo: f64, hi: f64, lambda_nu: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi, 1.0, 5.0, 10.0];
    for k in [0.01, 0.1, 1.0, 10.0, 100.0] {
        pts.push(k * lambda_nu);
    }
    clean_breakpoints(pts, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_prior_matches_closed_form() {
        // ½(ln 2π + ln 2) at x = 0, σ = λ = 1
        let f0 = discrepancy_oracle(0.0, 1.0, 1.0, 2.0).unwrap();
        assert!((f0 - 1.26551212348464).abs() < 1e-10);
        let f2 = discrepancy_oracle(2.0, 1.0, 1.0, 2.0).unwrap();
        assert!((f2 - 2.26551212348464).abs() < 1e-10);
    }

    #[test]
    fn laplace_prior_at_origin() {
        // ½ ln 2 + ln 2 - 1/4 - ln erfc(1/2), mpmath
        let f = discrepancy_oracle(0.0, 1.0, 2.0, 1.0).unwrap();
        assert!((f - 1.52473190067700).abs() < 1e-10, "{f}");
    }

    #[test]
    fn huge_arguments_stay_finite() {
        for &nu in &[0.3, 0.5, 1.0, 1.7, 2.0] {
            for &x in &[1e3, 1e6] {
                let f = discrepancy_oracle(x, 1.0, 1e-3, nu).map_err(|e| format!("{nu} {x} {e}")).unwrap();
                assert!(f.is_finite() && f > 0.0);
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(discrepancy_oracle(f64::INFINITY, 1.0, 1.0, 1.0).is_err());
        assert!(discrepancy_oracle(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(discrepancy_oracle(0.0, 1.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn excess_routes_agree_where_both_are_accurate() {
        for &(lambda, nu) in &[(0.5, 0.6), (2.0, 1.0), (3.0, 1.6), (0.2, 2.0)] {
            let o = LogDiscrepancyOracle::new(lambda, nu).unwrap();
            for &x in &[0.3, 0.7, 1.5] {
                let via_difference = -(o.difference_integral(x).unwrap() * (-o.ln_j0).exp()).ln_1p();
                let direct = o.ln_j0 - kernel(x, 1.0, &o.params).log_integral().unwrap();
                assert!((via_difference - direct).abs() < 1e-9 * direct.abs().max(1e-3), "λ={lambda} ν={nu} x={x}");
            }
        }
    }

    #[test]
    fn beta1_identity_matches_direct_moment() {
        for &(lambda, nu) in &[(0.1, 0.4), (1.0, 1.0), (5.0, 1.5), (2.0, 2.0)] {
            let o = LogDiscrepancyOracle::new(lambda, nu).unwrap();
            let direct = -std::f64::consts::LN_2 + o.one_minus_second_moment().unwrap().ln();
            assert!((o.beta1() - direct).abs() < 1e-8, "λ={lambda} ν={nu}");
        }
    }
}
