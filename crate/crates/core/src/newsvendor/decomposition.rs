use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Decision;
use crate::error::Result;
use crate::hedging::{delta_from, projected_payoff_from, xi_from, NestedMc};

/// Split of the unhedged payoff variance into a part driven by the asset and
/// a part driven by the demand noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoHedgeDecomposition {
    /// `Var(H_fin) + Cov(H_fin, H_u)`.
    pub financial_sq: f64,
    /// `Var(H_u) + Cov(H_fin, H_u)`.
    pub unhedgeable_sq: f64,
    /// Sample variance of the simulated terminal payoff itself.
    pub payoff_variance: f64,
}

impl NoHedgeDecomposition {
    pub fn financial_risk(&self) -> f64 {
        self.financial_sq.max(0.0).sqrt()
    }

    pub fn unhedgeable_risk(&self) -> f64 {
        self.unhedgeable_sq.max(0.0).sqrt()
    }

    pub fn total_sq(&self) -> f64 {
        self.financial_sq + self.unhedgeable_sq
    }
}

/// Decompose the payoff along the cached outer paths as
/// `H_fin = V_0 + sum xi dX` and `H_u = sum delta dBtilde`, both left-point sums.
pub fn risk_decomposition_no_hedge(engine: &NestedMc, d: &Decision) -> Result<NoHedgeDecomposition> {
    let demand = *engine.demand();
    d.validate(&demand)?;
    let n_steps = engine.config().grid.n_steps;
    let parts: Vec<(f64, f64, f64)> = (0..engine.n_outer())
        .into_par_iter()
        .map(|i| {
            let x = engine.x_path(i);
            let w = engine.demand_bm_path(i);
            let v0 = projected_payoff_from(&engine.moments(i, 0, d.r), d, &demand);
            let (mut fin, mut unh) = (v0, 0.0);
            for j in 0..n_steps {
                let m = engine.moments(i, j, d.r);
                fin += xi_from(&m, d, &demand) * (x[j + 1] - x[j]);
                unh += delta_from(&m, d, &demand) * (w[j + 1] - w[j]);
            }
            let a_t = engine.terminal_market_size(i);
            let h = (d.p - demand.c) * (d.r - demand.b * d.p) - (d.p - demand.s) * (d.r - a_t).max(0.0);
            (fin, unh, h)
        })
        .collect();
    let n = parts.len() as f64;
    let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| parts.iter().map(f).sum::<f64>() / n;
    let (mf, mu, mh) = (mean(&|p| p.0), mean(&|p| p.1), mean(&|p| p.2));
    let cov = |f: &dyn Fn(&(f64, f64, f64)) -> f64| parts.iter().map(f).sum::<f64>() / (n - 1.0);
    let var_f = cov(&|p| (p.0 - mf).powi(2));
    let var_u = cov(&|p| (p.1 - mu).powi(2));
    let cov_fu = cov(&|p| (p.0 - mf) * (p.1 - mu));
    let var_h = cov(&|p| (p.2 - mh).powi(2));
    Ok(NoHedgeDecomposition {
        financial_sq: var_f + cov_fu,
        unhedgeable_sq: var_u + cov_fu,
        payoff_variance: var_h,
    })
}
