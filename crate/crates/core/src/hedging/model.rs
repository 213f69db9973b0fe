use serde::{Deserialize, Serialize};

use super::nested::{NestedMc, NestedMcConfig};
use crate::error::{Error, Result};
use crate::newsvendor::{profit_unchecked, Decision, EmpiricalDist};
use crate::processes::{simulate_market_sizes, DemandParams, EouParams, Measure};

/// The two squared-risk terms of the minimum hedged variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    pub investment_sq: f64,
    pub unhedgeable_sq: f64,
    pub total: f64,
}

impl VarianceBreakdown {
    pub fn new(investment_sq: f64, unhedgeable_sq: f64) -> Self {
        Self { investment_sq, unhedgeable_sq, total: investment_sq + unhedgeable_sq }
    }

    pub fn risk(&self) -> f64 {
        self.total.sqrt()
    }
}

/// Target mean together with the quantities fixing the investment leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeProblem {
    pub m: f64,
    pub v0: f64,
    pub z0m: f64,
    /// Wealth level the investment leg steers towards, `(m Z0M - V0)/(Z0M - 1)`.
    pub gamma_m: f64,
}

impl HedgeProblem {
    pub fn new(m: f64, v0: f64, z0m: f64) -> Result<Self> {
        if !(z0m > 1.0) {
            return Err(Error::Consistency(format!("Z0M = {z0m} must exceed 1")));
        }
        Ok(Self { m, v0, z0m, gamma_m: (m * z0m - v0) / (z0m - 1.0) })
    }

    pub fn investment_sq(&self) -> f64 {
        (self.m - self.v0).powi(2) / (self.z0m - 1.0)
    }
}

/// A full evaluation of the hedged variance at one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub breakdown: VarianceBreakdown,
    pub v0: f64,
    pub v0_se: f64,
    pub unhedgeable_se: f64,
}

/// `V_0`: expected payoff under the risk-neutral market-size distribution.
pub fn v0(dist_m: &EmpiricalDist, d: &Decision, demand: &DemandParams) -> Result<f64> {
    d.validate(demand)?;
    Ok(profit_unchecked(dist_m, d.p, d.r, demand))
}

/// Everything needed to price decisions under hedging for one market.
///
/// Real-world and risk-neutral terminal samples share their random draws.
#[derive(Debug, Clone)]
pub struct HedgingModel {
    engine: NestedMc,
    dist_real: EmpiricalDist,
    dist_rn: EmpiricalDist,
    z0m: f64,
}

impl HedgingModel {
    pub fn build(params: &EouParams, demand: &DemandParams, cfg: &NestedMcConfig) -> Result<Self> {
        let engine = NestedMc::build(params, demand, cfg)?;
        let z0m = engine.forms().z0m(params.y0())?;
        let draw = |m| simulate_market_sizes(params, demand, &cfg.grid, cfg.n_terminal, cfg.seed, m);
        let dist_real = EmpiricalDist::new(draw(Measure::Real)?)?;
        let dist_rn = EmpiricalDist::new(draw(Measure::RiskNeutral)?)?;
        Ok(Self { engine, dist_real, dist_rn, z0m })
    }

    pub fn engine(&self) -> &NestedMc {
        &self.engine
    }

    pub fn params(&self) -> &EouParams {
        self.engine.params()
    }

    pub fn demand(&self) -> &DemandParams {
        self.engine.demand()
    }

    pub fn config(&self) -> &NestedMcConfig {
        self.engine.config()
    }

    pub fn dist_real(&self) -> &EmpiricalDist {
        &self.dist_real
    }

    pub fn dist_risk_neutral(&self) -> &EmpiricalDist {
        &self.dist_rn
    }

    pub fn z0m(&self) -> f64 {
        self.z0m
    }

    pub fn v0(&self, d: &Decision) -> f64 {
        profit_unchecked(&self.dist_rn, d.p, d.r, self.demand())
    }

    /// Standard error of [`Self::v0`] from the terminal sample.
    pub fn v0_se(&self, d: &Decision) -> f64 {
        let dm = self.demand();
        (d.p - dm.s) * (self.dist_rn.overage_variance(d.r) / self.dist_rn.len() as f64).sqrt()
    }

    pub fn problem(&self, m: f64, d: &Decision) -> Result<HedgeProblem> {
        HedgeProblem::new(m, self.v0(d), self.z0m)
    }

    /// Minimum hedged variance `B(m, P, R)` and its two terms.
    pub fn evaluate(&self, m: f64, d: &Decision) -> Result<Evaluation> {
        if !m.is_finite() {
            return Err(Error::InvalidInput(format!("target mean must be finite, got {m}")));
        }
        d.validate(self.demand())?;
        let v0 = self.v0(d);
        let investment_sq = (m - v0).powi(2) / (self.z0m - 1.0);
        let (unhedgeable_sq, unhedgeable_se) = self.engine.unhedgeable_sq(d);
        Ok(Evaluation {
            breakdown: VarianceBreakdown::new(investment_sq, unhedgeable_sq),
            v0,
            v0_se: self.v0_se(d),
            unhedgeable_se,
        })
    }

    pub fn variance_b(&self, m: f64, d: &Decision) -> Result<VarianceBreakdown> {
        Ok(self.evaluate(m, d)?.breakdown)
    }
}

/// One-shot `B(m, P, R)`; builds the nested simulation from scratch.
pub fn variance_b(
    m: f64,
    d: &Decision,
    params: &EouParams,
    demand: &DemandParams,
    cfg: &NestedMcConfig,
) -> Result<VarianceBreakdown> {
    HedgingModel::build(params, demand, cfg)?.variance_b(m, d)
}
