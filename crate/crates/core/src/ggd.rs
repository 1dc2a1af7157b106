//! One-dimensional generalized Gaussian distribution.
//!
//! The density is parameterised by its standard deviation `lambda` and shape
//! `nu`:  p(x) = kappa / (2 lambda_nu) * exp(-(|x| / lambda_nu)^nu)  with
//! lambda_nu = lambda * sqrt(Γ(1/ν) / Γ(3/ν)) and kappa = ν / Γ(1/ν).

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

pub const NU_MIN: f64 = 0.3;
pub const NU_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdParams {
    lambda: f64,
    nu: f64,
    lambda_nu: f64,
    kappa: f64,
    ln_norm: f64,
}

/// `ln(lambda_nu / lambda) = ½ (ln Γ(1/ν) − ln Γ(3/ν))`.
pub fn ln_scale_ratio(nu: f64) -> f64 {
    0.5 * (ln_gamma(1.0 / nu) - ln_gamma(3.0 / nu))
}

impl GgdParams {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GGD scale must be positive and finite, got {lambda}"
            )));
        }
        if !(NU_MIN..=NU_MAX).contains(&nu) {
            return Err(Error::InvalidParameter(format!(
                "GGD shape must lie in [{NU_MIN}, {NU_MAX}], got {nu}"
            )));
        }
        let ln_lambda_nu = lambda.ln() + ln_scale_ratio(nu);
        let ln_kappa = nu.ln() - ln_gamma(1.0 / nu);
        Ok(GgdParams {
            lambda,
            nu,
            lambda_nu: ln_lambda_nu.exp(),
            kappa: ln_kappa.exp(),
            ln_norm: ln_kappa - std::f64::consts::LN_2 - ln_lambda_nu,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda_nu(&self) -> f64 {
        self.lambda_nu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.ln_norm - (x.abs() / self.lambda_nu).powf(self.nu)
    }

    /// One draw: |X| = lambda_nu * G^(1/nu), G ~ Gamma(1/nu, 1), random sign.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = Gamma::new(1.0 / self.nu, 1.0)
            .expect("shape 1/nu is positive")
            .sample(rng);
        let magnitude = self.lambda_nu * g.powf(1.0 / self.nu);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

pub fn ggd_log_pdf(x: f64, p: &GgdParams) -> f64 {
    p.log_pdf(x)
}

/// `n` i.i.d. draws; deterministic in `seed`.
pub fn ggd_sample(p: &GgdParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.sample(&mut rng, n)
}

/// F(x) = Γ(2/x)² / (Γ(3/x) Γ(1/x)), the ratio E[|X|]² / E[X²] of a GGD
/// with shape x.
pub fn mallat_f(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("F is defined for x > 0, got {x}")));
    }
    Ok(mallat_f_unchecked(x))
}

fn mallat_f_unchecked(x: f64) -> f64 {
    (2.0 * ln_gamma(2.0 / x) - ln_gamma(3.0 / x) - ln_gamma(1.0 / x)).exp()
}

pub const F_TABLE_NODES: usize = 2048;
pub const F_TABLE_MIN: f64 = 0.25;
pub const F_TABLE_MAX: f64 = 2.5;

struct FTable {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn f_table() -> &'static FTable {
    static TABLE: OnceLock<FTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (lo, hi) = (F_TABLE_MIN.ln(), F_TABLE_MAX.ln());
        let step = (hi - lo) / (F_TABLE_NODES - 1) as f64;
        let x: Vec<f64> = (0..F_TABLE_NODES)
            .map(|i| match i {
                0 => F_TABLE_MIN,
                _ if i == F_TABLE_NODES - 1 => F_TABLE_MAX,
                _ => (lo + step * i as f64).exp(),
            })
            .collect();
        let y = x.iter().map(|&v| mallat_f_unchecked(v)).collect();
        FTable { x, y }
    })
}

/// Inverse of [`mallat_f`] by linear interpolation in a monotone table over
/// x ∈ [0.25, 2.5]; out-of-range `y` clamps to the table ends.
pub fn mallat_f_inverse(y: f64) -> f64 {
    let t = f_table();
    let n = t.y.len();
    if !(y > t.y[0]) {
        // also catches NaN
        return t.x[0];
    }
    if y >= t.y[n - 1] {
        return t.x[n - 1];
    }
    let i = t.y.partition_point(|&v| v <= y) - 1;
    let w = (y - t.y[i]) / (t.y[i + 1] - t.y[i]);
    t.x[i] + w * (t.x[i + 1] - t.x[i])
}
