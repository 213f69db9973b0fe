//! Asset-price and market-size simulation.
//!
//! The log asset price `Y = log X` follows an Ornstein-Uhlenbeck process
//! under the real-world measure and a driftless-in-`X` Brownian motion under
//! the risk-neutral measure. Market size is the integral of a linear demand
//! rate in `X` plus an independent Brownian demand shock.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::newsvendor::EmpiricalDist;
use crate::rng::{stream, StreamTag};

/// Exponential OU asset parameters together with the selling horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EouParams {
    pub kappa: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl EouParams {
    pub fn new(kappa: f64, alpha: f64, sigma: f64, x0: f64, horizon: f64) -> Result<Self> {
        let p = Self { kappa, alpha, sigma, x0, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("x0", self.x0),
            ("horizon", self.horizon),
        ] {
            ensure_finite(name, v)?;
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidInput(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.x0 <= 0.0 {
            return Err(Error::InvalidInput(format!("x0 must be > 0, got {}", self.x0)));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidInput(format!("horizon must be > 0, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn y0(&self) -> f64 {
        self.x0.ln()
    }

    /// Errors unless `kappa * horizon < pi/4`, the range where the hedging
    /// closed forms stay finite.
    pub fn check_kappa_horizon(&self) -> Result<()> {
        let kappa_t = self.kappa * self.horizon;
        if kappa_t < std::f64::consts::FRAC_PI_4 {
            Ok(())
        } else {
            Err(Error::KappaHorizon { kappa_t })
        }
    }

    /// Price at which the real-world drift of `X` vanishes, `exp(alpha + sigma^2/(2 kappa))`.
    /// Infinite for `kappa = 0`.
    pub fn neutral_price(&self) -> f64 {
        if self.kappa == 0.0 {
            f64::INFINITY
        } else {
            (self.alpha + self.sigma * self.sigma / (2.0 * self.kappa)).exp()
        }
    }

    /// Mean of `X` under the stationary law of `Y`, `exp(alpha + sigma^2/(4 kappa))`.
    pub fn stationary_mean(&self) -> f64 {
        if self.kappa == 0.0 {
            f64::INFINITY
        } else {
            (self.alpha + self.sigma * self.sigma / (4.0 * self.kappa)).exp()
        }
    }

    /// Real-world mean of `Y_t`.
    pub fn log_mean(&self, t: f64) -> f64 {
        self.alpha + (self.y0() - self.alpha) * (-self.kappa * t).exp()
    }

    /// Real-world variance of `Y_t`.
    pub fn log_variance(&self, t: f64) -> f64 {
        ou_variance(self.kappa, self.sigma, t)
    }
}

pub(crate) fn ou_variance(kappa: f64, sigma: f64, t: f64) -> f64 {
    let kt = 2.0 * kappa * t;
    if kt < 1e-12 {
        sigma * sigma * t
    } else {
        sigma * sigma * (-(-kt).exp_m1()) / (2.0 * kappa)
    }
}

/// Linear demand-rate model and the unit economics of the product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma_tilde: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
}

impl DemandParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu0", self.mu0),
            ("mu1", self.mu1),
            ("sigma_tilde", self.sigma_tilde),
            ("b", self.b),
            ("c", self.c),
            ("s", self.s),
        ] {
            ensure_finite(name, v)?;
        }
        if self.b <= 0.0 {
            return Err(Error::InvalidInput(format!("b must be > 0, got {}", self.b)));
        }
        if self.sigma_tilde < 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigma_tilde must be >= 0, got {}",
                self.sigma_tilde
            )));
        }
        if !(self.c > self.s && self.s >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need c > s >= 0, got c = {}, s = {}",
                self.c, self.s
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn rate(&self, x: f64) -> f64 {
        self.mu0 + self.mu1 * x
    }
}

/// Uniform time grid over the selling horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub n_steps: usize,
    pub dt: f64,
}

impl Default for PathGrid {
    fn default() -> Self {
        Self { n_steps: 21, dt: 1.0 / 252.0 }
    }
}

impl PathGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { n_steps, dt })
    }

    /// Grid with `n_steps` steps covering `horizon` exactly.
    pub fn for_horizon(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::new(n_steps, horizon / n_steps as f64)
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn check_matches(&self, params: &EouParams) -> Result<()> {
        if self.n_steps == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidInput("grid needs a positive step".into()));
        }
        let rel = (self.horizon() - params.horizon).abs() / params.horizon;
        if rel > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "grid covers {} years but the horizon is {}",
                self.horizon(),
                params.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Real,
    RiskNeutral,
}

/// One simulated path bundle on the grid.
///
/// `asset_bm` and `demand_bm` hold the (unscaled) driving Brownian motions,
/// both starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketScenario {
    pub measure: Measure,
    pub x_path: Vec<f64>,
    pub y_path: Vec<f64>,
    pub a_path: Vec<f64>,
    pub asset_bm: Vec<f64>,
    pub demand_bm: Vec<f64>,
    pub a_terminal: f64,
}

impl MarketScenario {
    /// Partial market size `C_t + sigma_tilde * Btilde_t` at grid index `j`.
    pub fn market_size_at(&self, j: usize, sigma_tilde: f64) -> f64 {
        self.a_path[j] + sigma_tilde * self.demand_bm[j]
    }

    pub fn financial_demand(&self) -> f64 {
        *self.a_path.last().expect("non-empty path")
    }
}

/// Grid state handed to path visitors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathPoint {
    pub y: f64,
    pub x: f64,
    pub c: f64,
    pub asset_bm: f64,
    pub demand_bm: f64,
}

/// Precomputed transition constants for one (params, grid, measure) triple.
#[derive(Debug, Clone)]
pub(crate) struct PathSimulator {
    params: EouParams,
    demand: DemandParams,
    grid: PathGrid,
    measure: Measure,
    decay: f64,
    ou_sd: f64,
    sqrt_dt: f64,
}

impl PathSimulator {
    pub fn new(params: &EouParams, demand: &DemandParams, grid: &PathGrid, measure: Measure) -> Result<Self> {
        params.validate()?;
        demand.validate()?;
        grid.check_matches(params)?;
        Ok(Self {
            params: *params,
            demand: *demand,
            grid: *grid,
            measure,
            decay: (-params.kappa * grid.dt).exp(),
            ou_sd: ou_variance(params.kappa, params.sigma, grid.dt).sqrt(),
            sqrt_dt: grid.dt.sqrt(),
        })
    }

    /// Walk one path, calling `visit(j, point)` at every grid index including 0.
    pub fn walk<R: Rng + ?Sized, F: FnMut(usize, &PathPoint)>(&self, rng: &mut R, mut visit: F) {
        let p = &self.params;
        let half_dt = 0.5 * self.grid.dt;
        let y0 = p.y0();
        let mut pt = PathPoint { y: y0, x: p.x0, c: 0.0, asset_bm: 0.0, demand_bm: 0.0 };
        visit(0, &pt);
        for j in 1..=self.grid.n_steps {
            let z_asset: f64 = rng.sample(StandardNormal);
            let z_demand: f64 = rng.sample(StandardNormal);
            pt.asset_bm += z_asset * self.sqrt_dt;
            pt.demand_bm += z_demand * self.sqrt_dt;
            let rate_prev = self.demand.rate(pt.x);
            pt.y = match self.measure {
                Measure::Real => p.alpha + (pt.y - p.alpha) * self.decay + self.ou_sd * z_asset,
                Measure::RiskNeutral => {
                    y0 - 0.5 * p.sigma * p.sigma * self.grid.time(j) + p.sigma * pt.asset_bm
                }
            };
            pt.x = pt.y.exp();
            pt.c += half_dt * (rate_prev + self.demand.rate(pt.x));
            visit(j, &pt);
        }
    }

    pub fn sigma_tilde(&self) -> f64 {
        self.demand.sigma_tilde
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidInput("path count must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Simulate `n` full path bundles. Path `i` uses its own stream keyed by
/// `(seed, i)`, and the same draws feed both measures.
pub fn simulate_paths(
    params: &EouParams,
    demand: &DemandParams,
    grid: &PathGrid,
    n: usize,
    seed: u64,
    measure: Measure,
) -> Result<Vec<MarketScenario>> {
    check_count(n)?;
    let sim = PathSimulator::new(params, demand, grid, measure)?;
    let len = grid.n_points();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, StreamTag::Terminal, &[i as u64]);
            let mut sc = MarketScenario {
                measure,
                x_path: Vec::with_capacity(len),
                y_path: Vec::with_capacity(len),
                a_path: Vec::with_capacity(len),
                asset_bm: Vec::with_capacity(len),
                demand_bm: Vec::with_capacity(len),
                a_terminal: 0.0,
            };
            sim.walk(&mut rng, |_, pt| {
                sc.x_path.push(pt.x);
                sc.y_path.push(pt.y);
                sc.a_path.push(pt.c);
                sc.asset_bm.push(pt.asset_bm);
                sc.demand_bm.push(pt.demand_bm);
            });
            sc.a_terminal = sc.market_size_at(grid.n_steps, demand.sigma_tilde);
            sc
        })
        .collect())
}

fn terminal_values(
    params: &EouParams,
    demand: &DemandParams,
    grid: &PathGrid,
    n: usize,
    seed: u64,
    measure: Measure,
    with_noise: bool,
) -> Result<Vec<f64>> {
    check_count(n)?;
    let sim = PathSimulator::new(params, demand, grid, measure)?;
    let last = grid.n_steps;
    let st = if with_noise { sim.sigma_tilde() } else { 0.0 };
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, StreamTag::Terminal, &[i as u64]);
            let mut out = 0.0;
            sim.walk(&mut rng, |j, pt| {
                if j == last {
                    out = pt.c + st * pt.demand_bm;
                }
            });
            out
        })
        .collect())
}

/// Terminal market sizes `A_T` without storing paths. Bit-identical to the
/// `a_terminal` fields produced by [`simulate_paths`] with the same inputs.
pub fn simulate_market_sizes(
    params: &EouParams,
    demand: &DemandParams,
    grid: &PathGrid,
    n: usize,
    seed: u64,
    measure: Measure,
) -> Result<Vec<f64>> {
    terminal_values(params, demand, grid, n, seed, measure, true)
}

/// Financial demand component `C_T` only.
pub fn simulate_financial_demand(
    params: &EouParams,
    demand: &DemandParams,
    grid: &PathGrid,
    n: usize,
    seed: u64,
    measure: Measure,
) -> Result<Vec<f64>> {
    terminal_values(params, demand, grid, n, seed, measure, false)
}

/// Empirical `A_T` distribution for `n` simulated paths.
pub fn sample_market_size(
    params: &EouParams,
    demand: &DemandParams,
    grid: &PathGrid,
    n: usize,
    seed: u64,
    measure: Measure,
) -> Result<EmpiricalDist> {
    EmpiricalDist::new(simulate_market_sizes(params, demand, grid, n, seed, measure)?)
}

pub fn terminal_market_samples(scenarios: &[MarketScenario]) -> Result<EmpiricalDist> {
    let first = scenarios
        .first()
        .ok_or_else(|| Error::InvalidInput("no scenarios supplied".into()))?;
    if scenarios.iter().any(|s| s.measure != first.measure) {
        return Err(Error::InvalidInput("scenarios mix real and risk-neutral measures".into()));
    }
    EmpiricalDist::new(scenarios.iter().map(|s| s.a_terminal).collect())
}

/// Market price of risk `(kappa/sigma)(alpha - log x) + sigma/2`.
pub fn market_price_of_risk(x: f64, params: &EouParams) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidInput(format!("price must be positive, got {x}")));
    }
    Ok(log_price_of_risk(x.ln(), params))
}

#[inline]
pub(crate) fn log_price_of_risk(y: f64, params: &EouParams) -> f64 {
    params.kappa / params.sigma * (params.alpha - y) + 0.5 * params.sigma
}
