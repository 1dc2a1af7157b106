//! The discrepancy function f(x) = -ln p(x), where p is the density of a
//! generalized Gaussian coefficient observed through additive Gaussian noise.
//!
//! Closed forms exist for ν = 2 and ν = 1. For other shapes the function is
//! evaluated either by quadrature ([`discrepancy_oracle`]) or by the fast
//! approximation
//!
//! ```text
//! f(x) ≈ ln σ + γ⁰ + exp φ̂(|x|/σ)
//! φ̂(u) = 2 ln u + β₁ - softplus((2 - ν) ln u + β₁ - β₂, h)
//! ```
//!
//! whose constants are read from a [`DiscrepancyLut`].

mod lut;
mod oracle;

use std::f64::consts::{PI, SQRT_2};

use log::warn;

pub use lut::{build_lut, DiscrepancyLut, LUT_LAMBDA_MAX, LUT_LAMBDA_MIN, LUT_SIZE};
pub use oracle::{discrepancy_oracle, LogDiscrepancyOracle, ORACLE_REL_TOL};

use crate::error::{Error, Result};
use crate::special::{erfcx, ln_erfc, log_add_exp};

/// ½ [ln 2π + ln(σ² + λ²) + x² / (σ² + λ²)]
pub fn discrepancy_exact_nu2(x: f64, sigma: f64, lambda: f64) -> f64 {
    let v = sigma * sigma + lambda * lambda;
    0.5 * ((2.0 * PI).ln() + v.ln() + x * x / v)
}

/// Laplacian prior: ln(2√2 λ) - σ²/λ² - ln[e^{√2x/λ} erfc(b₊) + e^{-√2x/λ} erfc(b₋)]
/// with b± = ±x/(√2σ) + σ/λ, evaluated through erfcx so that neither large
/// |x|/σ nor large σ/λ overflows.
pub fn discrepancy_exact_nu1(x: f64, sigma: f64, lambda: f64) -> f64 {
    let x = x.abs();
    let r = sigma / lambda;
    let u = x / (SQRT_2 * sigma);
    let b_plus = u + r;
    let b_minus = r - u;
    let base = (2.0 * SQRT_2 * lambda).ln();
    if b_minus >= 0.0 {
        // Both exponentials carry the common factor exp(-x²/2σ² - σ²/λ²).
        base + u * u - log_add_exp(erfcx(b_plus).ln(), erfcx(b_minus).ln())
    } else {
        let t_plus = -u * u - r * r + erfcx(b_plus).ln();
        let t_minus = -SQRT_2 * x / lambda + ln_erfc(b_minus);
        base - r * r - log_add_exp(t_plus, t_minus)
    }
}

/// h ln(1 + e^{x/h}), without overflow.
pub fn softplus(x: f64, h: f64) -> f64 {
    let z = x / h;
    if z > 40.0 {
        x
    } else if z < -40.0 {
        h * z.exp()
    } else {
        h * z.exp().ln_1p()
    }
}

/// Constants of the log-discrepancy approximation at unit noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticParams {
    pub gamma0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub h: f64,
}

impl AsymptoticParams {
    /// φ̂(u) for u > 0.
    pub fn log_phi(&self, u: f64) -> f64 {
        let lu = u.ln();
        let left = self.alpha1 * lu + self.beta1;
        let right = self.alpha2 * lu + self.beta2;
        left - softplus(left - right, self.h)
    }

    /// Approximate f at unit noise.
    pub fn eval_unit(&self, u: f64) -> f64 {
        let u = u.abs();
        if u == 0.0 {
            self.gamma0
        } else {
            self.gamma0 + self.log_phi(u).exp()
        }
    }
}

pub const FIT_POINTS: usize = 201;
pub const FIT_X_MIN: f64 = 1e-3;
pub const FIT_X_MAX: f64 = 1e3;
pub const FIT_H_MIN: f64 = 1e-8;
pub const FIT_H_MAX: f64 = 1e3;

/// The 201 log-spaced abscissae of the softplus fit.
pub fn fit_grid() -> Vec<f64> {
    let (lo, hi) = (FIT_X_MIN.log10(), FIT_X_MAX.log10());
    (0..FIT_POINTS)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64))
        .collect()
}

/// Sum of squared log-discrepancy residuals for a given h, skipping
/// non-finite targets.
pub fn fit_residual(asym: &AsymptoticParams, xs: &[f64], phi: &[f64], h: f64) -> f64 {
    let a = AsymptoticParams { h, ..*asym };
    xs.iter()
        .zip(phi)
        .filter(|(_, p)| p.is_finite())
        .map(|(&x, &p)| {
            let r = a.log_phi(x) - p;
            r * r
        })
        .sum()
}

/// Least-squares h for precomputed log-discrepancy samples `phi` at `xs`.
///
/// A coarse scan over [1e-8, 1e3] picks the bracket, then golden-section
/// search on ln h refines it to a relative tolerance of 1e-4.
pub fn fit_h_samples(asym: &AsymptoticParams, xs: &[f64], phi: &[f64]) -> Result<f64> {
    let bad = phi.iter().filter(|p| !p.is_finite()).count();
    if bad * 20 > phi.len() {
        return Err(Error::DegenerateFit {
            bad,
            total: phi.len(),
        });
    }
    let cost = |lh: f64| fit_residual(asym, xs, phi, lh.exp());
    let (lo, hi) = (FIT_H_MIN.ln(), FIT_H_MAX.ln());
    const SCAN: usize = 45;
    let step = (hi - lo) / (SCAN - 1) as f64;
    let scan: Vec<f64> = (0..SCAN).map(|i| cost(lo + step * i as f64)).collect();
    let best = (0..SCAN).fold(0, |b, i| if scan[i] < scan[b] { i } else { b });
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = lo + step * (best + 1).min(SCAN - 1) as f64;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-4 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    // The scan node may beat the refined interior point at the boundary.
    let refined = 0.5 * (a + b);
    let h = if cost(refined) <= scan[best] {
        refined
    } else {
        lo + step * best as f64
    };
    Ok(h.exp())
}

/// Least-squares softplus sharpness for (λ, ν) at unit noise.
pub fn fit_h(lambda: f64, nu: f64, asym: &AsymptoticParams) -> Result<f64> {
    let oracle = LogDiscrepancyOracle::new(lambda, nu)?;
    let xs = fit_grid();
    let phi = xs
        .iter()
        .map(|&x| oracle.phi(x))
        .collect::<Result<Vec<_>>>()?;
    fit_h_samples(asym, &xs, &phi)
}

/// γ⁰, β₁, β₂ by quadrature and h by least squares, for unit noise.
pub fn compute_asymptotics(lambda: f64, nu: f64) -> Result<AsymptoticParams> {
    let oracle = LogDiscrepancyOracle::new(lambda, nu)?;
    let mut asym = AsymptoticParams {
        gamma0: oracle.gamma0(),
        alpha1: 2.0,
        beta1: oracle.beta1(),
        alpha2: nu,
        beta2: oracle.beta2(),
        h: 1.0,
    };
    let xs = fit_grid();
    let phi = xs
        .iter()
        .map(|&x| oracle.phi(x))
        .collect::<Result<Vec<_>>>()?;
    match fit_h_samples(&asym, &xs, &phi) {
        Ok(h) => asym.h = h,
        Err(e @ Error::DegenerateFit { .. }) => {
            warn!("lambda = {lambda}, nu = {nu}: {e}; using h = 1");
        }
        Err(e) => return Err(e),
    }
    Ok(asym)
}

/// β₁ for the Laplacian prior in closed form:
/// -ln λ + ln[1/(√π erfcx(1/λ)) - 1/λ].
pub fn beta1_laplace(lambda: f64) -> f64 {
    -lambda.ln() + (1.0 / (PI.sqrt() * erfcx(1.0 / lambda)) - 1.0 / lambda).ln()
}

/// β₂ = -ν ln λ_ν.
pub fn beta2_closed_form(lambda: f64, nu: f64) -> f64 {
    -nu * (lambda.ln() + crate::ggd::ln_scale_ratio(nu))
}

/// Fast approximate discrepancy; reduces to unit noise and interpolates the
/// constants from `lut`.
pub fn approx_discrepancy(x: f64, sigma: f64, lambda: f64, nu: f64, lut: &DiscrepancyLut) -> f64 {
    let asym = lut.params(lambda / sigma, nu);
    sigma.ln() + asym.eval_unit(x / sigma)
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn nu2_reference_values() {
        assert!((discrepancy_exact_nu2(0.0, 1.0, 1.0) - 1.26551212348464).abs() < 1e-13);
        assert!((discrepancy_exact_nu2(2.0, 1.0, 1.0) - 2.26551212348464).abs() < 1e-13);
    }

    #[test]
    fn nu1_reference_and_symmetry() {
        assert!((discrepancy_exact_nu1(0.0, 1.0, 2.0) - 1.52473190067700).abs() < 1e-12);
        for &x in &[0.1, 1.0, 7.5, 300.0] {
            assert_eq!(discrepancy_exact_nu1(x, 1.3, 0.4), discrepancy_exact_nu1(-x, 1.3, 0.4));
        }
    }

    #[test]
    fn nu1_extreme_arguments() {
        for &(x, sigma, lambda) in &[(1e6, 1.0, 1.0), (0.0, 1e3, 1.0), (1e6, 1e3, 1.0), (5.0, 1.0, 1e-3)] {
            let f = discrepancy_exact_nu1(x, sigma, lambda);
            assert!(f.is_finite(), "{x} {sigma} {lambda}");
        }
        // Far from the origin f grows like √2|x|/λ.
        let (a, b) = (discrepancy_exact_nu1(1e5, 1.0, 1.0), discrepancy_exact_nu1(1e5 + 1.0, 1.0, 1.0));
        assert!((b - a - SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn softplus_limits() {
        assert!((softplus(0.0, 1.0) - LN_2).abs() < 1e-15);
        assert!((softplus(100.0, 1.0) - 100.0).abs() < 1e-12);
        assert!(softplus(-100.0, 1.0) > 0.0);
        for &(x, h) in &[(-3.0, 0.1), (2.0, 5.0), (0.0, 1e-8), (-1e-6, 1e-8)] {
            assert!(softplus(x, h) >= x.max(0.0));
        }
    }

    #[test]
    fn laplace_beta_closed_forms() {
        assert!((beta1_laplace(2.0) + 1.569369432175987).abs() < 1e-12);
        assert!((beta2_closed_form(2.0, 1.0) + 0.346573590279973).abs() < 1e-14);
    }

    #[test]
    fn approximation_is_exact_at_origin() {
        let a = AsymptoticParams {
            gamma0: 1.25,
            alpha1: 2.0,
            beta1: -1.0,
            alpha2: 0.8,
            beta2: -0.5,
            h: 0.3,
        };
        assert_eq!(a.eval_unit(0.0), 1.25);
    }

    #[test]
    fn degenerate_fit_is_reported() {
        let a = AsymptoticParams {
            gamma0: 0.0,
            alpha1: 2.0,
            beta1: 0.0,
            alpha2: 1.0,
            beta2: 0.0,
            h: 1.0,
        };
        let xs = fit_grid();
        let mut phi = vec![0.0; xs.len()];
        for p in phi.iter_mut().take(11) {
            *p = f64::NAN;
        }
        assert!(matches!(fit_h_samples(&a, &xs, &phi), Err(Error::DegenerateFit { .. })));
        phi[10] = 0.0;
        assert!(fit_h_samples(&a, &xs, &phi).is_ok());
    }
}
