use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::EouParams;

/// Time-to-maturity functions of the EOU minimal-variance density.
///
/// With `D = cos(kappa tau) - sin(kappa tau)`, the ratio of the real-world
/// density to the variance-optimal density at time `t` is
/// `exp(-f0 - f1 y - f2 y^2)` evaluated at `tau = T - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    kappa: f64,
    alpha: f64,
    sigma: f64,
    horizon: f64,
}

struct Trig {
    cos: f64,
    sin: f64,
    den: f64,
}

impl ClosedForms {
    pub fn new(params: &EouParams) -> Result<Self> {
        params.validate()?;
        params.check_kappa_horizon()?;
        Ok(Self { kappa: params.kappa, alpha: params.alpha, sigma: params.sigma, horizon: params.horizon })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Largest `tau` for which the forms stay finite.
    pub fn tau_limit(&self) -> f64 {
        if self.kappa == 0.0 {
            f64::INFINITY
        } else {
            std::f64::consts::FRAC_PI_4 / self.kappa
        }
    }

    fn trig(&self, tau: f64) -> Trig {
        let (sin, cos) = (self.kappa * tau).sin_cos();
        Trig { cos, sin, den: cos - sin }
    }

    pub fn a(&self, tau: f64) -> f64 {
        0.5 + 1.0 / self.trig(tau).den
    }

    pub fn b(&self, tau: f64) -> f64 {
        let t = self.trig(tau);
        (t.cos + t.sin) / t.den
    }

    pub fn f0(&self, tau: f64) -> f64 {
        let (k, a, s2) = (self.kappa, self.alpha, self.sigma * self.sigma);
        let t = self.trig(tau);
        let kt = k * tau;
        // sigma^2/(2 kappa) * sin(kappa tau), written to survive kappa -> 0
        let sinc = if kt.abs() < 1e-8 { 1.0 - kt * kt / 6.0 } else { t.sin / kt };
        let drift_term = 0.5 * s2 * tau * sinc;
        -a - (0.5 * k + 0.25 * s2) * tau - 0.5 * t.den.ln()
            + (a + a * a * k / s2 * t.sin + drift_term) / t.den
    }

    pub fn f1(&self, tau: f64) -> f64 {
        let (k, a, s2) = (self.kappa, self.alpha, self.sigma * self.sigma);
        let t = self.trig(tau);
        (-1.0 + t.cos - (2.0 * k * a / s2 + 1.0) * t.sin) / t.den
    }

    pub fn f2(&self, tau: f64) -> f64 {
        let t = self.trig(tau);
        self.kappa / (self.sigma * self.sigma) * t.sin / t.den
    }

    /// `f0 + f1 y + f2 y^2`.
    pub fn exponent(&self, tau: f64, y: f64) -> f64 {
        self.f0(tau) + y * (self.f1(tau) + self.f2(tau) * y)
    }

    /// Density ratio `Z_t / Z_t^M` at time `t` and log price `y`.
    pub fn z_ratio(&self, t: f64, y: f64) -> Result<f64> {
        if !(0.0..=self.horizon * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::InvalidInput(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let tau = (self.horizon - t).max(0.0);
        let v = (-self.exponent(tau, y)).exp();
        if !(v >= 0.0 && v <= 1.0 + 1e-9) {
            return Err(Error::Consistency(format!("density ratio {v} outside [0, 1] at t = {t}, y = {y}")));
        }
        Ok(v.min(1.0))
    }

    /// `Z_0^M = E[Z_T^2]` from the time-zero ratio and `Z_0 = 1`.
    pub fn z0m(&self, y0: f64) -> Result<f64> {
        let v = self.exponent(self.horizon, y0).exp();
        if !(v > 1.0) {
            return Err(Error::Consistency(format!("Z0M = {v} must exceed 1")));
        }
        Ok(v)
    }

    /// Market price of risk at log price `y`.
    pub fn price_of_risk(&self, y: f64) -> f64 {
        self.kappa / self.sigma * (self.alpha - y) + 0.5 * self.sigma
    }

    /// Feedback coefficient `L` of the investment leg: the optimal holding is
    /// `L / X_t` times the wealth shortfall.
    pub fn investment_loading(&self, tau: f64, y: f64) -> f64 {
        self.a(tau) - 1.0 + self.kappa / (self.sigma * self.sigma) * self.b(tau) * (self.alpha - y)
    }

    /// Right-hand sides of the Riccati system solved by `(f2, f1, f0)`.
    pub fn ode_rhs(&self, f: [f64; 3]) -> [f64; 3] {
        let (k, a, s) = (self.kappa, self.alpha, self.sigma);
        let s2 = s * s;
        let [f2, f1, _] = f;
        let r = k / s;
        // kappa * (alpha + sigma^2/kappa) and (kappa/sigma)^2 (alpha + sigma^2/(2 kappa)),
        // expanded so kappa = 0 needs no special case
        let k_a1 = k * a + s2;
        let r2_a2 = r * r * a + 0.5 * k;
        let r_a2 = r * a + 0.5 * s;
        [
            2.0 * k * f2 + 2.0 * s2 * f2 * f2 + r * r,
            k * f1 - 2.0 * k_a1 * f2 + 2.0 * s2 * f2 * f1 - 2.0 * r2_a2,
            -k_a1 * f1 + 0.5 * s2 * (f1 * f1 + 2.0 * f2) + r_a2 * r_a2,
        ]
    }
}

/// Convenience wrapper for [`ClosedForms::z_ratio`].
pub fn z_ratio(t: f64, y: f64, params: &EouParams) -> Result<f64> {
    ClosedForms::new(params)?.z_ratio(t, y)
}

/// Convenience wrapper for [`ClosedForms::z0m`].
pub fn z0m(params: &EouParams) -> Result<f64> {
    ClosedForms::new(params)?.z0m(params.y0())
}
