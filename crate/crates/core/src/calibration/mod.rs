//! Parameter estimation from market and operations data, and the rank test
//! that classifies how the asset trend shifts demand.

mod demand;
mod eou;
mod rank_test;

pub use demand::{calibrate_demand, demand_objective, synthetic_ops, CalibrationBudget, OpsSeries};
pub use eou::{fit_eou, FitReport, PriceSeries};
pub use rank_test::{mann_whitney_u, mann_whitney_u_with, Alternative, PValueMethod, RankTest, EXACT_MAX_SIZE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{simulate_financial_demand, DemandParams, EouParams, Measure, PathGrid};
use crate::rng::{stream_key, StreamTag};

/// Direction in which the asset trend shifts financial demand relative to
/// the risk-neutral benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    /// `C_T` dominates `C_T^M` stochastically.
    Positive,
    Negative,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceConfig {
    pub n: usize,
    pub seed: u64,
    pub grid: PathGrid,
    pub significance: f64,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        Self { n: 100_000, seed: 0, grid: PathGrid::default(), significance: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub impact: Impact,
    /// Test of "`C_T` greater than `C_T^M`".
    pub greater: RankTest,
    /// Test of "`C_T` less than `C_T^M`".
    pub less: RankTest,
    pub n: usize,
    pub significance: f64,
}

/// Compare independent samples of `C_T` under the real and risk-neutral
/// measures with both one-sided rank tests.
pub fn dominance_report(params: &EouParams, demand: &DemandParams, cfg: &DominanceConfig) -> Result<DominanceReport> {
    if !(cfg.significance > 0.0 && cfg.significance < 1.0) {
        return Err(Error::InvalidInput(format!("significance must lie in (0, 1), got {}", cfg.significance)));
    }
    let real_seed = stream_key(cfg.seed, StreamTag::Dominance, &[0]);
    let neutral_seed = stream_key(cfg.seed, StreamTag::Dominance, &[1]);
    let real = simulate_financial_demand(params, demand, &cfg.grid, cfg.n, real_seed, Measure::Real)?;
    let neutral = simulate_financial_demand(params, demand, &cfg.grid, cfg.n, neutral_seed, Measure::RiskNeutral)?;
    let greater = mann_whitney_u(&real, &neutral, Alternative::Greater)?;
    let less = mann_whitney_u(&real, &neutral, Alternative::Less)?;
    let impact = if greater.p_value < cfg.significance {
        Impact::Positive
    } else if less.p_value < cfg.significance {
        Impact::Negative
    } else {
        Impact::Inconclusive
    };
    Ok(DominanceReport { impact, greater, less, n: cfg.n, significance: cfg.significance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{compact, sport, wti};

    fn cfg(n: usize) -> DominanceConfig {
        DominanceConfig { n, seed: 21, ..Default::default() }
    }

    #[test]
    fn no_asset_link_is_inconclusive() {
        let demand = DemandParams { mu1: 0.0, ..sport() };
        let rep = dominance_report(&wti(40.0), &demand, &cfg(2000)).unwrap();
        assert_eq!(rep.impact, Impact::Inconclusive);
        assert_eq!(rep.greater.p_value, 1.0);
    }

    #[test]
    fn low_price_classification() {
        assert_eq!(dominance_report(&wti(40.0), &compact(), &cfg(20_000)).unwrap().impact, Impact::Positive);
        assert_eq!(dominance_report(&wti(40.0), &sport(), &cfg(20_000)).unwrap().impact, Impact::Negative);
    }

    #[test]
    fn bad_significance() {
        let c = DominanceConfig { significance: 1.5, ..cfg(10) };
        assert!(dominance_report(&wti(40.0), &sport(), &c).is_err());
    }
}
