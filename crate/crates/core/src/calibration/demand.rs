use std::collections::BTreeMap;

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eou::FitReport;
use crate::error::{Error, Result};
use crate::instances::{monthly_demand, monthly_grid, MONTH};
use crate::newsvendor::{solve_newsvendor, EmpiricalDist};
use crate::processes::{DemandParams, EouParams, Measure, PathSimulator};
use crate::rng::{stream, StreamTag};

/// Monthly operations data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsSeries {
    pub months: Vec<String>,
    pub sales: Vec<f64>,
    pub prices: Vec<f64>,
    /// Asset price on the first trading day of each month.
    pub x0: Vec<f64>,
    /// Average asset price within each month.
    pub xbar: Vec<f64>,
}

impl OpsSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.months.len();
        if n == 0 {
            return Err(Error::InvalidInput("operations series is empty".into()));
        }
        if [self.sales.len(), self.prices.len(), self.x0.len(), self.xbar.len()].iter().any(|&l| l != n) {
            return Err(Error::InvalidInput("operations columns have different lengths".into()));
        }
        if self.sales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("sales must be finite and non-negative".into()));
        }
        for (name, col) in [("price", &self.prices), ("x0", &self.x0), ("xbar", &self.xbar)] {
            if col.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidInput(format!("{name} values must be positive")));
            }
        }
        Ok(())
    }

    /// `sum(P_i^2 + S_i^2)`, the yardstick for objective values.
    pub fn data_scale(&self) -> f64 {
        self.prices.iter().zip(&self.sales).map(|(p, s)| p * p + s * s).sum()
    }
}

/// Search effort for [`calibrate_demand`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBudget {
    /// Number of Nelder-Mead starts; the first one starts at `init`.
    pub restarts: usize,
    pub max_iters: u64,
    /// Market-size samples per month.
    pub n_samples: usize,
    pub seed: u64,
    /// Relative spread of random starting points around `init`.
    pub spread: f64,
}

impl Default for CalibrationBudget {
    fn default() -> Self {
        Self { restarts: 8, max_iters: 600, n_samples: 10_000, seed: 0, spread: 0.3 }
    }
}

/// Per-month draws of the average asset price and of the demand noise, shared
/// across every objective evaluation.
struct MonthDraws {
    avg_x: Vec<f64>,
    noise: Vec<f64>,
}

fn month_draws(asset: &EouParams, x0: f64, month: usize, n: usize, seed: u64) -> Result<MonthDraws> {
    let grid = monthly_grid();
    let params = asset.with_x0(x0);
    // unit loadings: C_T is the path average and the noise term is Btilde_T
    let unit = DemandParams { mu0: 0.0, mu1: 1.0 / MONTH, sigma_tilde: 1.0, b: 1.0, c: 1.0, s: 0.0 };
    let sim = PathSimulator::new(&params, &unit, &grid, Measure::Real)?;
    let mut rng = stream(seed, StreamTag::Calibration, &[month as u64]);
    let mut avg_x = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        sim.walk(&mut rng, |j, pt| {
            if j == grid.n_steps {
                avg_x.push(pt.c);
                noise.push(pt.demand_bm);
            }
        });
    }
    Ok(MonthDraws { avg_x, noise })
}

/// Calibration vector `[A, B, b, c, sigma_tilde]` over one month.
fn to_demand(v: &[f64]) -> Option<DemandParams> {
    let d = monthly_demand(v[0], v[1], v[2], v[3], v[4].abs());
    d.validate().ok().map(|_| d)
}

fn to_vector(d: &DemandParams) -> [f64; 5] {
    [d.mu0 * MONTH, d.mu1 * MONTH, d.b, d.c, d.sigma_tilde]
}

struct Objective<'a> {
    ops: &'a OpsSeries,
    draws: &'a [MonthDraws],
    origin: [f64; 5],
    scale: [f64; 5],
    penalty: f64,
}

impl Objective<'_> {
    fn params(&self, u: &[f64]) -> Vec<f64> {
        (0..5).map(|k| self.origin[k] + self.scale[k] * u[k]).collect()
    }

    fn model_prices(&self, v: &[f64]) -> Option<Vec<f64>> {
        let d = to_demand(v)?;
        self.draws
            .iter()
            .map(|m| {
                let samples = m
                    .avg_x
                    .iter()
                    .zip(&m.noise)
                    .map(|(x, w)| v[0] + v[1] * x + d.sigma_tilde * w)
                    .collect();
                let dist = EmpiricalDist::new(samples).ok()?;
                solve_newsvendor(&dist, &d).ok().map(|s| s.p_nv)
            })
            .collect()
    }

    fn value(&self, v: &[f64]) -> f64 {
        let Some(prices) = self.model_prices(v) else {
            return self.penalty;
        };
        let ops = self.ops;
        (0..ops.len())
            .map(|i| {
                let dp = prices[i] - ops.prices[i];
                let ds = v[0] + v[1] * ops.xbar[i] - v[2] * prices[i] - ops.sales[i];
                dp * dp + ds * ds
            })
            .sum()
    }
}

impl CostFunction for &Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let v = self.value(&self.params(u));
        Ok(if v.is_finite() { v } else { self.penalty })
    }
}

struct RestartOutcome {
    point: Vec<f64>,
    cost: f64,
    converged: bool,
}

fn run_restart(obj: &Objective<'_>, start: Vec<f64>, max_iters: u64) -> Result<RestartOutcome> {
    let mut simplex = vec![start.clone()];
    for k in 0..start.len() {
        let mut v = start.clone();
        v[k] += if v[k] >= 0.0 { 0.1 } else { -0.1 };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let point = state.get_best_param().cloned().unwrap_or(start);
    let converged = matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged));
    Ok(RestartOutcome { cost: state.get_best_cost(), point, converged })
}

/// Multi-start Nelder-Mead fit of `[A, B, b, c, sigma_tilde]` (with `s = 0`)
/// to monthly prices and sales. Each month's model price is the newsvendor
/// price under `n_samples` simulated market sizes started from that month's
/// opening asset price.
///
/// `history[k]` is the best objective after the first `k + 1` restarts.
pub fn calibrate_demand(
    ops: &OpsSeries,
    asset: &EouParams,
    init: &DemandParams,
    budget: &CalibrationBudget,
) -> Result<(DemandParams, FitReport)> {
    ops.validate()?;
    asset.validate()?;
    monthly_grid().check_matches(asset)?;
    init.validate()?;
    if budget.restarts == 0 || budget.max_iters == 0 || budget.n_samples < 100 {
        return Err(Error::InvalidInput(
            "calibration needs at least one restart, one iteration and 100 samples per month".into(),
        ));
    }
    let draws = (0..ops.len())
        .into_par_iter()
        .map(|i| month_draws(asset, ops.x0[i], i, budget.n_samples, budget.seed))
        .collect::<Result<Vec<_>>>()?;
    let origin = to_vector(init);
    let scale = origin.map(|v| if v != 0.0 { v.abs() } else { 1.0 });
    let data_scale = ops.data_scale();
    let obj = Objective { ops, draws: &draws, origin, scale, penalty: 1e6 * data_scale.max(1.0) };

    let starts: Vec<Vec<f64>> = (0..budget.restarts)
        .map(|k| {
            if k == 0 {
                vec![0.0; 5]
            } else {
                let mut rng = stream(budget.seed, StreamTag::Calibration, &[u64::MAX, k as u64]);
                (0..5).map(|_| budget.spread * (2.0 * rng.random::<f64>() - 1.0)).collect()
            }
        })
        .collect();
    let outcomes = starts
        .into_par_iter()
        .map(|s| run_restart(&obj, s, budget.max_iters))
        .collect::<Result<Vec<_>>>()?;

    let mut history = Vec::with_capacity(outcomes.len());
    let mut best = 0;
    for (k, o) in outcomes.iter().enumerate() {
        if o.cost < outcomes[best].cost {
            best = k;
        }
        history.push(outcomes[best].cost);
    }
    let winner = &outcomes[best];
    let v = obj.params(&winner.point);
    let demand = to_demand(&v).ok_or_else(|| {
        Error::Numerical("no restart reached demand parameters with a solvable newsvendor".into())
    })?;
    if winner.cost >= obj.penalty {
        return Err(Error::Numerical("every restart stayed in the infeasible region".into()));
    }
    let prices = obj.model_prices(&v).expect("feasible optimum");
    let resid: Vec<f64> = (0..ops.len())
        .flat_map(|i| {
            let ds = v[0] + v[1] * ops.xbar[i] - v[2] * prices[i] - ops.sales[i];
            [prices[i] - ops.prices[i], ds]
        })
        .collect();
    let residual_sd = (resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64).sqrt();
    let estimates = BTreeMap::from([
        ("A".to_string(), v[0]),
        ("B".to_string(), v[1]),
        ("b".to_string(), v[2]),
        ("c".to_string(), v[3]),
        ("sigma_tilde".to_string(), v[4].abs()),
        ("data_scale".to_string(), data_scale),
    ]);
    Ok((
        demand,
        FitReport {
            estimates,
            std_errors: BTreeMap::new(),
            residual_sd,
            residual_autocorr: f64::NAN,
            objective: winner.cost,
            n_obs: ops.len(),
            converged: winner.converged,
            history,
        },
    ))
}

/// Objective value of `demand` on `ops`, with the same draws `calibrate_demand` uses.
pub fn demand_objective(ops: &OpsSeries, asset: &EouParams, demand: &DemandParams, n_samples: usize, seed: u64) -> Result<f64> {
    ops.validate()?;
    monthly_grid().check_matches(asset)?;
    let draws = (0..ops.len())
        .into_par_iter()
        .map(|i| month_draws(asset, ops.x0[i], i, n_samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let origin = to_vector(demand);
    let obj = Objective { ops, draws: &draws, origin, scale: [1.0; 5], penalty: f64::INFINITY };
    let v = obj.value(&origin);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::AssumptionViolated("newsvendor has no interior optimum in some month".into()))
    }
}

/// Noise-free operations data: each month's price is the model newsvendor
/// price and sales follow the demand line at the realised average asset price.
pub fn synthetic_ops(
    asset: &EouParams,
    demand: &DemandParams,
    x0: &[f64],
    xbar: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<OpsSeries> {
    if x0.len() != xbar.len() || x0.is_empty() {
        return Err(Error::InvalidInput("x0 and xbar must be non-empty and aligned".into()));
    }
    if demand.s != 0.0 {
        return Err(Error::InvalidInput("calibrated demand has zero salvage value".into()));
    }
    monthly_grid().check_matches(asset)?;
    let draws = (0..x0.len())
        .into_par_iter()
        .map(|i| month_draws(asset, x0[i], i, n_samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let v = to_vector(demand);
    let placeholder = OpsSeries {
        months: Vec::new(),
        sales: Vec::new(),
        prices: Vec::new(),
        x0: Vec::new(),
        xbar: Vec::new(),
    };
    let obj = Objective { ops: &placeholder, draws: &draws, origin: v, scale: [1.0; 5], penalty: 0.0 };
    let prices = obj
        .model_prices(&v)
        .ok_or_else(|| Error::AssumptionViolated("newsvendor has no interior optimum in some month".into()))?;
    let sales = (0..x0.len()).map(|i| (v[0] + v[1] * xbar[i] - v[2] * prices[i]).max(0.0)).collect();
    Ok(OpsSeries {
        months: (0..x0.len()).map(|i| format!("{:04}-{:02}", 2000 + i / 12, i % 12 + 1)).collect(),
        sales,
        prices,
        x0: x0.to_vec(),
        xbar: xbar.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{sport, wti};

    fn months(n: usize) -> (Vec<f64>, Vec<f64>) {
        let x0: Vec<f64> = (0..n).map(|i| 45.0 + 40.0 * ((i as f64) * 0.7).sin().abs()).collect();
        let xbar = x0.iter().enumerate().map(|(i, x)| x * (1.0 + 0.03 * ((i as f64) * 1.3).cos())).collect();
        (x0, xbar)
    }

    #[test]
    fn noiseless_data_fits_exactly_at_truth() {
        let (x0, xbar) = months(12);
        let ops = synthetic_ops(&wti(60.0), &sport(), &x0, &xbar, 2000, 3).unwrap();
        let f = demand_objective(&ops, &wti(60.0), &sport(), 2000, 3).unwrap();
        assert!(f < 1e-12 * ops.data_scale(), "{f}");
        let budget = CalibrationBudget { restarts: 2, max_iters: 60, n_samples: 2000, seed: 3, spread: 0.1 };
        let (_, rep) = calibrate_demand(&ops, &wti(60.0), &sport(), &budget).unwrap();
        assert!(rep.objective <= f);
    }

    #[test]
    fn history_is_monotone_and_improves_on_perturbed_start() {
        let (x0, xbar) = months(10);
        let ops = synthetic_ops(&wti(60.0), &sport(), &x0, &xbar, 1000, 5).unwrap();
        let start = DemandParams { b: 2.3, c: 33_000.0, ..sport() };
        let f0 = demand_objective(&ops, &wti(60.0), &start, 1000, 5).unwrap();
        let budget = CalibrationBudget { restarts: 3, max_iters: 250, n_samples: 1000, seed: 5, spread: 0.05 };
        let (fit, rep) = calibrate_demand(&ops, &wti(60.0), &start, &budget).unwrap();
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(rep.history.len(), 3);
        assert!(rep.objective < 0.1 * f0, "{} vs {f0}", rep.objective);
        assert!(fit.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        let (x0, xbar) = months(3);
        let mut ops = synthetic_ops(&wti(60.0), &sport(), &x0, &xbar, 500, 1).unwrap();
        ops.sales[0] = -1.0;
        assert!(ops.validate().is_err());
        ops.sales.pop();
        assert!(ops.validate().is_err());
        let ok = synthetic_ops(&wti(60.0), &sport(), &x0, &xbar, 500, 1).unwrap();
        let zero = CalibrationBudget { restarts: 0, ..Default::default() };
        assert!(calibrate_demand(&ok, &wti(60.0), &sport(), &zero).is_err());
        let long = EouParams { horizon: 1.0, ..wti(60.0) };
        assert!(demand_objective(&ok, &long, &sport(), 500, 1).is_err());
    }
}
