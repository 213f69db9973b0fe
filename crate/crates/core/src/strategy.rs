//! Path-wise simulation of the variance-optimal hedge and empirical checks
//! of its mean, variance and risk split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedging::{
    conditional_moments, inner_integrals, projected_payoff_from, xi_from, Evaluation, HedgeProblem, HedgingModel,
    MarketState,
};
use crate::newsvendor::Decision;
use crate::processes::{Measure, PathSimulator};
use crate::rng::{stream, StreamTag};

/// One simulated run of the hedge on the trading grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPath {
    /// Asset holding over each step (left-point rule), length `n_steps`.
    pub theta: Vec<f64>,
    /// Cumulative hedging gains, length `n_steps + 1`.
    pub chi: Vec<f64>,
    pub chi_rm: Vec<f64>,
    pub chi_iv: Vec<f64>,
    /// Projected payoff `V_t`; the last entry is the realised payoff.
    pub v_t: Vec<f64>,
    pub payoff: f64,
    /// Terminal value of the asset's driving Brownian motion.
    pub asset_bm_terminal: f64,
}

impl StrategyPath {
    pub fn terminal_wealth(&self) -> f64 {
        self.payoff + self.chi[self.chi.len() - 1]
    }

    /// Production payoff plus the risk-mitigation gains.
    pub fn hedged_payoff(&self) -> f64 {
        self.payoff + self.chi_rm[self.chi_rm.len() - 1]
    }

    pub fn investment_gain(&self) -> f64 {
        self.chi_iv[self.chi_iv.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub decision: Decision,
    pub problem: HedgeProblem,
    pub analytic: Evaluation,
    pub paths: Vec<StrategyPath>,
}

/// Simulate the optimal hedge on `n_paths` fresh real-world paths.
///
/// Conditional loadings come from `n_inner` risk-neutral continuations per
/// state, drawn from streams separate from those of the model cache.
pub fn simulate_strategy(
    model: &HedgingModel,
    d: &Decision,
    m: f64,
    n_paths: usize,
    n_inner: usize,
) -> Result<Ensemble> {
    let params = *model.params();
    let demand = *model.demand();
    let cfg = *model.config();
    params.check_kappa_horizon()?;
    d.validate(&demand)?;
    if n_paths < 2 || n_inner == 0 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 paths and 1 inner sample, got {n_paths} and {n_inner}"
        )));
    }
    let analytic = model.evaluate(m, d)?;
    let problem = model.problem(m, d)?;
    let forms = *model.engine().forms();
    let grid = cfg.grid;
    let n = grid.n_steps;
    let sim = PathSimulator::new(&params, &demand, &grid, Measure::Real)?;

    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, StreamTag::StrategyOuter, &[i as u64]);
            let mut xs = Vec::with_capacity(n + 1);
            let mut ys = Vec::with_capacity(n + 1);
            let mut as_ = Vec::with_capacity(n + 1);
            let mut bm_t = 0.0;
            sim.walk(&mut rng, |_, pt| {
                xs.push(pt.x);
                ys.push(pt.y);
                as_.push(pt.c + demand.sigma_tilde * pt.demand_bm);
                bm_t = pt.asset_bm;
            });

            let mut theta = Vec::with_capacity(n);
            let mut chi_rm = vec![0.0; n + 1];
            let mut chi_iv = vec![0.0; n + 1];
            let mut chi = vec![0.0; n + 1];
            let mut v_t = Vec::with_capacity(n + 1);
            let mut buf = Vec::with_capacity(n_inner);
            for j in 0..n {
                let tau = (n - j) as f64 * grid.dt;
                let mut irng = stream(cfg.seed, StreamTag::StrategyInner, &[i as u64, j as u64]);
                inner_integrals(params.sigma, grid.dt, n - j, n_inner, &mut irng, &mut buf);
                let state = MarketState { tau, x: xs[j], a: as_[j] };
                let mom = conditional_moments(&state, &buf, d.r, &demand);
                let v = projected_payoff_from(&mom, d, &demand);
                let xi = xi_from(&mom, d, &demand);
                let loading = forms.investment_loading(tau, ys[j]);
                let th = -xi + loading / xs[j] * (problem.gamma_m - v - chi[j]);
                let dx = xs[j + 1] - xs[j];
                chi_rm[j + 1] = chi_rm[j] - xi * dx;
                chi_iv[j + 1] = chi_iv[j] + (th + xi) * dx;
                chi[j + 1] = chi_rm[j + 1] + chi_iv[j + 1];
                theta.push(th);
                v_t.push(v);
            }
            let a_t = as_[n];
            let payoff = (d.p - demand.c) * (d.r - demand.b * d.p) - (d.p - demand.s) * (d.r - a_t).max(0.0);
            v_t.push(payoff);
            StrategyPath { theta, chi, chi_rm, chi_iv, v_t, payoff, asset_bm_terminal: bm_t }
        })
        .collect();

    Ok(Ensemble { decision: *d, problem, analytic, paths })
}

/// An estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `target` (with its own standard error) lies within `k`
    /// combined standard errors.
    pub fn agrees_with(&self, target: f64, target_se: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * (self.std_error.powi(2) + target_se.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub mean_wealth: Estimate,
    pub variance: Estimate,
    /// `Var(chi_iv) + Cov(chi_iv, H^h)`.
    pub investment_sq: Estimate,
    /// `Var(H^h) + Cov(chi_iv, H^h)`.
    pub unhedgeable_sq: Estimate,
    pub mean_hedged_payoff: Estimate,
    pub mean_investment_gain: Estimate,
    /// Sample correlation of `H^h` with the asset Brownian motion at maturity.
    pub hedged_asset_correlation: f64,
    /// Set when a squared-risk estimate is negative by more than 3 SE.
    pub inconsistent: bool,
}

fn mean_est(v: &[f64]) -> Estimate {
    let (value, std_error) = crate::numeric::mean_and_se(v);
    Estimate { value, std_error }
}

/// Sample covariance with a delta-method standard error.
fn cov_est(u: &[f64], w: &[f64]) -> Estimate {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mw = w.iter().sum::<f64>() / n;
    let prods: Vec<f64> = u.iter().zip(w).map(|(a, b)| (a - mu) * (b - mw)).collect();
    let value = prods.iter().sum::<f64>() / (n - 1.0);
    let (_, se) = crate::numeric::mean_and_se(&prods);
    Estimate { value, std_error: se }
}

fn correlation(u: &[f64], w: &[f64]) -> f64 {
    let c = cov_est(u, w).value;
    let vu = cov_est(u, u).value;
    let vw = cov_est(w, w).value;
    if vu <= 0.0 || vw <= 0.0 {
        0.0
    } else {
        c / (vu * vw).sqrt()
    }
}

pub fn decompose_risk(ensemble: &Ensemble) -> RiskDecomposition {
    let wealth: Vec<f64> = ensemble.paths.iter().map(StrategyPath::terminal_wealth).collect();
    let hedged: Vec<f64> = ensemble.paths.iter().map(StrategyPath::hedged_payoff).collect();
    let invest: Vec<f64> = ensemble.paths.iter().map(StrategyPath::investment_gain).collect();
    let bm: Vec<f64> = ensemble.paths.iter().map(|p| p.asset_bm_terminal).collect();
    let investment_sq = cov_est(&invest, &wealth);
    let unhedgeable_sq = cov_est(&hedged, &wealth);
    let inconsistent = investment_sq.value < -3.0 * investment_sq.std_error
        || unhedgeable_sq.value < -3.0 * unhedgeable_sq.std_error;
    RiskDecomposition {
        mean_wealth: mean_est(&wealth),
        variance: cov_est(&wealth, &wealth),
        investment_sq,
        unhedgeable_sq,
        mean_hedged_payoff: mean_est(&hedged),
        mean_investment_gain: mean_est(&invest),
        hedged_asset_correlation: correlation(&hedged, &bm),
        inconsistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedging::NestedMcConfig;
    use crate::instances::{sport, wti};
    use crate::processes::{DemandParams, PathGrid};

    fn model(demand: DemandParams) -> HedgingModel {
        let cfg = NestedMcConfig { n_outer: 200, n_inner: 100, n_terminal: 20_000, grid: PathGrid::default(), seed: 13 };
        HedgingModel::build(&wti(40.0), &demand, &cfg).unwrap()
    }

    #[test]
    fn components_add_up() {
        let mdl = model(sport());
        let d = Decision::new(41_700.0, 99_000.0);
        let ens = simulate_strategy(&mdl, &d, 1.03e8, 40, 50).unwrap();
        for p in &ens.paths {
            for j in 0..p.chi.len() {
                assert_eq!(p.chi[j], p.chi_rm[j] + p.chi_iv[j]);
            }
            assert_eq!(*p.v_t.last().unwrap(), p.payoff);
            assert_eq!(p.theta.len(), 21);
        }
        let dec = decompose_risk(&ens);
        let total = dec.investment_sq.value + dec.unhedgeable_sq.value;
        assert!((total - dec.variance.value).abs() < 1e-9 * dec.variance.value);
    }

    #[test]
    fn no_asset_link_means_no_hedging_gains_at_v0() {
        let demand = DemandParams { mu1: 0.0, ..sport() };
        let mdl = model(demand);
        let d = Decision::new(41_700.0, 99_000.0);
        let m = mdl.v0(&d);
        let ens = simulate_strategy(&mdl, &d, m, 200, 100).unwrap();
        let dec = decompose_risk(&ens);
        // xi vanishes, so only the small feedback from V_t noise moves wealth
        for p in &ens.paths {
            assert!(p.chi_rm.iter().all(|&v| v == 0.0));
        }
        assert!(dec.investment_sq.value.abs() < 3.0 * dec.investment_sq.std_error, "{:?}", dec.investment_sq);
        assert!((dec.mean_hedged_payoff.value - m).abs() < 3.0 * dec.mean_hedged_payoff.std_error + 1e-3 * m);
    }

    #[test]
    fn rejects_tiny_ensembles() {
        let mdl = model(sport());
        let d = Decision::new(41_700.0, 99_000.0);
        assert!(simulate_strategy(&mdl, &d, 1e8, 1, 10).is_err());
    }

    #[test]
    fn mean_and_variance_match_analytic() {
        let mdl = model(sport());
        let d = Decision::new(41_700.0, 99_000.0);
        let m = 1.03e8;
        let ens = simulate_strategy(&mdl, &d, m, 600, 100).unwrap();
        let dec = decompose_risk(&ens);
        assert!(dec.mean_wealth.agrees_with(m, 0.0, 3.5), "{:?}", dec.mean_wealth);
        let b = ens.analytic.breakdown.total;
        assert!(dec.variance.agrees_with(b, ens.analytic.unhedgeable_se, 3.5), "{:?} vs {b}", dec.variance);
    }
}
