//! Scalar MAP shrinkage under a generalized Gaussian prior:
//!
//! s(x) = argmin_t  (x - t)² / 2σ² + (|t| / λ_ν)^ν
//!
//! Stationary points satisfy t + γ sign(t)|t|^{ν-1} = x with γ = ν σ² λ_ν^{-ν}.

use crate::error::{Error, Result};
use crate::ggd::GgdParams;

/// Closed form used by [`ShrinkContext::shrink`] for a given shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// ν < 1: threshold at τ, then the two-term expansion.
    Hard,
    /// ν ≈ 1
    Soft,
    /// ν ≈ 4/3, root of a depressed cubic.
    FourThirds,
    /// ν ≈ 3/2, root of a quadratic.
    ThreeHalves,
    /// ν ≈ 2
    Wiener,
}

impl Branch {
    /// Nearest of {1, 4/3, 3/2, 2} for ν ≥ 1; ties go to the smaller shape.
    pub fn for_shape(nu: f64) -> Branch {
        if nu < 1.0 {
            Branch::Hard
        } else if nu <= 7.0 / 6.0 {
            Branch::Soft
        } else if nu <= 17.0 / 12.0 {
            Branch::FourThirds
        } else if nu <= 7.0 / 4.0 {
            Branch::ThreeHalves
        } else {
            Branch::Wiener
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShrinkContext {
    sigma: f64,
    lambda: f64,
    nu: f64,
    // σ² λ_ν^{-ν}: weight of the prior term after scaling the objective by σ².
    a: f64,
    gamma: f64,
    tau: Option<f64>,
    branch: Branch,
    wiener: f64,
    // Per-call constants of the fast path in noise-normalised units: γ, τ/σ
    // and the Cardano offset 2(γ/3)^{3/2}.
    g_unit: f64,
    tau_unit: f64,
    q_unit: f64,
}

impl ShrinkContext {
    pub fn new(sigma: f64, lambda: f64, nu: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be positive, got {sigma}"
            )));
        }
        let p = GgdParams::new(lambda, nu)?;
        let s2 = sigma * sigma;
        let a = s2 * p.lambda_nu().powf(-nu);
        let gamma = nu * a;
        let tau = if nu < 1.0 {
            Some(
                (2.0 - nu)
                    * (2.0 - 2.0 * nu).powf(-(1.0 - nu) / (2.0 - nu))
                    * a.powf(1.0 / (2.0 - nu)),
            )
        } else if nu == 1.0 {
            Some(std::f64::consts::SQRT_2 * s2 / lambda)
        } else {
            None
        };
        let g_unit = gamma * sigma.powf(nu - 2.0);
        Ok(ShrinkContext {
            g_unit,
            tau_unit: tau.map_or(f64::NAN, |t| t / sigma),
            q_unit: 2.0 * (g_unit / 3.0).powf(1.5),
            sigma,
            lambda,
            nu,
            a,
            gamma,
            tau,
            branch: Branch::for_shape(nu),
            wiener: lambda * lambda / (lambda * lambda + s2),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Threshold below which the MAP estimate is 0 (ν ≤ 1 only).
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// σ²-scaled objective ½(x - t)² + σ² (|t|/λ_ν)^ν.
    pub fn objective(&self, x: f64, t: f64) -> f64 {
        let d = x - t;
        0.5 * d * d + self.a * t.abs().powf(self.nu)
    }

    /// Fast shrinkage: closed form of the nearest supported shape, evaluated
    /// with this context's γ and λ in noise-normalised units (x/σ, λ/σ) and
    /// scaled back by σ, so s_{σ,λ}(x) = σ·s_{1,λ/σ}(x/σ) for every ν.
    pub fn shrink(&self, x: f64) -> f64 {
        let u = x.abs() / self.sigma;
        let g = self.g_unit;
        let mag = match self.branch {
            Branch::Hard => {
                if u <= self.tau_unit {
                    0.0
                } else {
                    (u - g * u.powf(self.nu - 1.0)).clamp(0.0, u)
                }
            }
            Branch::Soft => (u - g).max(0.0),
            Branch::FourThirds => {
                // y³ + γy = |x|, t = y³, via Cardano with the difference of
                // cube roots rewritten to avoid cancellation.
                let q = self.q_unit;
                let zeta = u.hypot(q);
                let a = (0.5 * q * q / (zeta + u)).cbrt();
                let b = (0.5 * (zeta + u)).cbrt();
                let y = u / (a * a + a * b + b * b);
                y * y * y
            }
            Branch::ThreeHalves => {
                let y = 2.0 * u / ((g * g + 4.0 * u).sqrt() + g);
                y * y
            }
            Branch::Wiener => self.wiener * u,
        };
        let mag = (self.sigma * mag).min(x.abs());
        if x.is_sign_negative() {
            -mag
        } else {
            mag
        }
    }

    /// Reference solution by root finding; used to validate [`Self::shrink`].
    pub fn shrink_oracle(&self, x: f64) -> Result<f64> {
        let ax = x.abs();
        if ax == 0.0 {
            return Ok(0.0);
        }
        let mag = if self.nu == 2.0 {
            self.wiener * ax
        } else if self.nu > 1.0 {
            self.halley(ax)?
        } else {
            self.nonconvex(ax)?
        };
        Ok(if x < 0.0 { -mag } else { mag })
    }

    // Root of t + γ t^{ν-1} = |x| for ν > 1, by Halley's method on u = ln t
    // so that roots spanning many decades are resolved uniformly.
    fn halley(&self, ax: f64) -> Result<f64> {
        let (g, e) = (self.gamma, self.nu - 1.0);
        let tol = 1e-12 * ax.max(1.0);
        let resid = |u: f64| u.exp() + g * (e * u).exp() - ax;
        let mut hi = ax.ln();
        let mut lo = (0.5 * ax).ln().min(((0.5 * ax).ln() - g.ln()) / e);
        let mut u = hi.min((hi - g.ln()) / e);
        let mut r = resid(u);
        for _ in 0..20 {
            if r.abs() <= tol {
                return Ok(u.exp().min(ax));
            }
            if r > 0.0 {
                hi = hi.min(u);
            } else {
                lo = lo.max(u);
            }
            let (t, p) = (u.exp(), g * (e * u).exp());
            let d1 = t + e * p;
            let d2 = t + e * e * p;
            let mut next = u - 2.0 * r * d1 / (2.0 * d1 * d1 - r * d2);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            u = next;
            r = resid(u);
        }
        if r.abs() <= tol {
            Ok(u.exp().min(ax))
        } else {
            Err(Error::NoConvergence {
                x: ax,
                residual: r,
            })
        }
    }

    // ν ≤ 1: the objective may have a second local minimum away from 0; find
    // it by safeguarded Newton and keep whichever of the two is lower.
    fn nonconvex(&self, ax: f64) -> Result<f64> {
        let (g, nu) = (self.gamma, self.nu);
        let t_min = (g * (1.0 - nu)).powf(1.0 / (2.0 - nu));
        let h = |t: f64| t + g * t.powf(nu - 1.0) - ax;
        if t_min >= ax || h(t_min) >= 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-12 * ax.max(1.0);
        // h is increasing and convex on (t_min, |x|]; Newton from the right
        // decreases monotonically onto the root.
        let (mut lo, mut hi) = (t_min, ax);
        let mut t = ax;
        let mut r = h(t);
        let mut converged = false;
        for _ in 0..200 {
            if r.abs() <= tol {
                converged = true;
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = 1.0 + g * (nu - 1.0) * t.powf(nu - 2.0);
            let mut next = t - r / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == t {
                converged = true;
                break;
            }
            t = next;
            r = h(t);
        }
        if !converged && r.abs() > tol {
            return Err(Error::NoConvergence { x: ax, residual: r });
        }
        Ok(if self.objective(ax, t) < self.objective(ax, 0.0) {
            t
        } else {
            0.0
        })
    }
}

pub fn shrink(x: f64, ctx: &ShrinkContext) -> f64 {
    ctx.shrink(x)
}

pub fn shrink_oracle(x: f64, ctx: &ShrinkContext) -> Result<f64> {
    ctx.shrink_oracle(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let w = ShrinkContext::new(1.0, 1.0, 2.0).unwrap();
        assert!((w.shrink(2.0) - 1.0).abs() < 1e-15);
        let s = ShrinkContext::new(1.0, 2f64.sqrt(), 1.0).unwrap();
        assert!((s.shrink(3.0) - 2.0).abs() < 1e-14);
        assert!((s.gamma() - s.tau().unwrap()).abs() < 1e-12);
        let c = ShrinkContext::new(1.0, 1.0, 4.0 / 3.0).unwrap();
        assert_eq!(c.shrink(0.0), 0.0);
        let q = ShrinkContext::new(1.0, 1.0, 1.5).unwrap();
        let g = q.gamma();
        let want = ((g * g + 16.0).sqrt() - g).powi(2) / 4.0;
        assert!((q.shrink(4.0) - want).abs() < 1e-12);
        assert!((q.shrink_oracle(4.0).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn below_threshold_is_killed() {
        let c = ShrinkContext::new(1.3, 0.7, 0.5).unwrap();
        let tau = c.tau().unwrap();
        assert_eq!(c.shrink(tau), 0.0);
        assert_eq!(c.shrink(-0.5 * tau), 0.0);
        assert!(c.shrink(1.01 * tau) > 0.0);
    }

    #[test]
    fn dispatch_boundaries() {
        assert_eq!(Branch::for_shape(0.99), Branch::Hard);
        assert_eq!(Branch::for_shape(7.0 / 6.0), Branch::Soft);
        assert_eq!(Branch::for_shape(1.17), Branch::FourThirds);
        assert_eq!(Branch::for_shape(17.0 / 12.0), Branch::FourThirds);
        assert_eq!(Branch::for_shape(1.75), Branch::ThreeHalves);
        assert_eq!(Branch::for_shape(1.76), Branch::Wiener);
    }

    #[test]
    fn oracle_at_threshold_prefers_zero() {
        // At |x| = τ both candidates tie; the printed branch returns 0.
        let c = ShrinkContext::new(1.0, 1.0, 0.7).unwrap();
        let tau = c.tau().unwrap();
        assert_eq!(c.shrink_oracle(0.999999 * tau).unwrap(), 0.0);
        assert!(c.shrink_oracle(1.000001 * tau).unwrap() > 0.0);
    }

    #[test]
    fn oracle_extreme_ratios_converge() {
        for &nu in &[1.01, 1.2, 4.0 / 3.0, 1.5, 1.9] {
            for &(sigma, lambda) in &[(1e3, 1e-3), (1e-3, 1e3), (1.0, 1.0)] {
                let c = ShrinkContext::new(sigma, lambda, nu).unwrap();
                for &x in &[1e-8, 1e-3, 1.0, 1e4] {
                    let t = c.shrink_oracle(x).unwrap();
                    assert!((0.0..=x).contains(&t));
                }
            }
        }
    }
}
