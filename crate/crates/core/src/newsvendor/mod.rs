//! Price-setting newsvendor without hedging: profit maximisation, the
//! mean-variance frontier and sufficient conditions on the market size.

mod decomposition;
mod dist;

pub use decomposition::{risk_decomposition_no_hedge, NoHedgeDecomposition};
pub use dist::EmpiricalDist;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, golden_section_min};
use crate::processes::DemandParams;

/// Price `p` and virtual production quantity `r = q + b p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub p: f64,
    pub r: f64,
}

impl Decision {
    pub fn new(p: f64, r: f64) -> Self {
        Self { p, r }
    }

    pub fn quantity(&self, demand: &DemandParams) -> f64 {
        self.r - demand.b * self.p
    }

    pub fn validate(&self, demand: &DemandParams) -> Result<()> {
        if !(self.p.is_finite() && self.r.is_finite()) {
            return Err(Error::InvalidInput("decision must be finite".into()));
        }
        if self.p < demand.c {
            return Err(Error::InvalidInput(format!("price {} is below cost {}", self.p, demand.c)));
        }
        if self.r < demand.b * self.p * (1.0 - 1e-12) {
            return Err(Error::InvalidInput(format!(
                "VPQ {} implies negative production at price {}",
                self.r, self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvSolution {
    pub p_nv: f64,
    pub r_nv: f64,
    pub q_nv: f64,
    pub profit: f64,
}

impl NvSolution {
    pub fn decision(&self) -> Decision {
        Decision::new(self.p_nv, self.r_nv)
    }
}

/// `E[H_T] = (P - c)(R - bP) - (P - s) E[(R - A)^+]`.
pub fn expected_profit(dist: &EmpiricalDist, d: &Decision, demand: &DemandParams) -> Result<f64> {
    d.validate(demand)?;
    Ok(profit_unchecked(dist, d.p, d.r, demand))
}

#[inline]
pub(crate) fn profit_unchecked(dist: &EmpiricalDist, p: f64, r: f64, demand: &DemandParams) -> f64 {
    (p - demand.c) * (r - demand.b * p) - (p - demand.s) * dist.expected_overage(r)
}

/// `Var[H_T] = (P - s)^2 Var[(R - A)^+]`.
pub fn payoff_variance(dist: &EmpiricalDist, d: &Decision, demand: &DemandParams) -> Result<f64> {
    d.validate(demand)?;
    Ok(variance_unchecked(dist, d.p, d.r, demand))
}

#[inline]
fn variance_unchecked(dist: &EmpiricalDist, p: f64, r: f64, demand: &DemandParams) -> f64 {
    (p - demand.s).powi(2) * dist.overage_variance(r)
}

/// Critical-fractile VPQ for a given price.
#[inline]
pub(crate) fn fractile_vpq(dist: &EmpiricalDist, p: f64, demand: &DemandParams) -> f64 {
    dist.quantile((p - demand.c) / (p - demand.s))
}

/// Price implied by the first-order condition in `P` at the fractile VPQ.
#[inline]
fn price_map(dist: &EmpiricalDist, p: f64, demand: &DemandParams) -> f64 {
    let r = fractile_vpq(dist, p, demand);
    (dist.expected_sales(r) + demand.b * demand.c) / (2.0 * demand.b)
}

/// Profit-maximising price and VPQ.
///
/// A damped fixed-point iteration on the price first-order condition is
/// tried first; bisection on `P - g(P)` over `[c, (max A + bc)/(2b)]` takes
/// over when it stalls.
pub fn solve_newsvendor(dist: &EmpiricalDist, demand: &DemandParams) -> Result<NvSolution> {
    demand.validate()?;
    let (b, c) = (demand.b, demand.c);
    let p_hi = (dist.max() + b * c) / (2.0 * b);
    if p_hi <= c {
        return Err(Error::AssumptionViolated(
            "market size never exceeds b*c, so no price above cost sells".into(),
        ));
    }
    let tol = 1e-12;
    let mut p = ((dist.mean() + b * c) / (2.0 * b)).clamp(c, p_hi);
    let mut converged = false;
    for _ in 0..200 {
        let g = price_map(dist, p, demand);
        if (g - p).abs() <= tol * p.abs() {
            p = g;
            converged = true;
            break;
        }
        p = 0.5 * p + 0.5 * g;
    }
    if !converged {
        p = bisect(|q| q - price_map(dist, q, demand), c, p_hi, tol * p_hi, 400)
            .ok_or_else(|| Error::AssumptionViolated("no interior price satisfies the first-order condition".into()))?;
    }
    let r = fractile_vpq(dist, p, demand);
    let q = r - b * p;
    let profit = profit_unchecked(dist, p, r, demand);
    if !(p > c && q > 0.0 && profit > 0.0) {
        return Err(Error::AssumptionViolated(format!(
            "newsvendor optimum is not interior (P = {p}, Q = {q}, profit = {profit})"
        )));
    }
    let residual = (price_map(dist, p, demand) - p).abs() / p;
    if residual > 1e-6 {
        return Err(Error::Numerical(format!("price condition residual {residual:e}")));
    }
    Ok(NvSolution { p_nv: p, r_nv: r, q_nv: q, profit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoHedgePoint {
    pub m: f64,
    pub decision: Decision,
    pub q: f64,
    pub variance: f64,
    pub risk: f64,
}

/// Maximum expected profit over `R` at a fixed price.
fn best_profit_at(dist: &EmpiricalDist, p: f64, demand: &DemandParams) -> (f64, f64) {
    let r = fractile_vpq(dist, p, demand).max(demand.b * p);
    (profit_unchecked(dist, p, r, demand), r)
}

/// Smallest `R` with expected profit equal to `m` at price `p`, if any.
fn smallest_vpq_for(dist: &EmpiricalDist, p: f64, m: f64, demand: &DemandParams) -> Option<f64> {
    let (best, r_star) = best_profit_at(dist, p, demand);
    if best < m {
        return None;
    }
    let r_lo = demand.b * p;
    bisect(|r| profit_unchecked(dist, p, r, demand) - m, r_lo, r_star, 1e-10 * r_star.abs().max(1.0), 300)
}

/// Minimum-variance decisions for each target mean without hedging.
pub fn frontier_no_hedge(
    dist: &EmpiricalDist,
    demand: &DemandParams,
    m_grid: &[f64],
) -> Result<Vec<NoHedgePoint>> {
    let nv = solve_newsvendor(dist, demand)?;
    let mut out = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        out.push(min_variance_point(dist, demand, &nv, m)?);
    }
    for w in out.windows(2) {
        if w[1].m >= w[0].m && w[1].risk < w[0].risk * (1.0 - 1e-9) - 1e-9 {
            return Err(Error::Consistency(format!(
                "no-hedge risk decreased from {} to {} as m rose",
                w[0].risk, w[1].risk
            )));
        }
    }
    Ok(out)
}

const GRID_POINTS: usize = 41;

fn min_variance_point(dist: &EmpiricalDist, demand: &DemandParams, nv: &NvSolution, m: f64) -> Result<NoHedgePoint> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidInput(format!("target mean must be positive, got {m}")));
    }
    let at_max = |m: f64| {
        let d = nv.decision();
        let v = variance_unchecked(dist, d.p, d.r, demand);
        NoHedgePoint { m, decision: d, q: nv.q_nv, variance: v, risk: v.sqrt() }
    };
    if m > nv.profit * (1.0 + 1e-9) {
        return Err(Error::Infeasible(format!(
            "target {m} exceeds the maximum expected profit {}",
            nv.profit
        )));
    }
    if m >= nv.profit * (1.0 - 1e-9) {
        return Ok(at_max(m));
    }
    let c = demand.c;
    let p_top = (dist.max() / demand.b).max(nv.p_nv);
    let gap = |p: f64| best_profit_at(dist, p, demand).0 - m;
    let p_lo = if gap(c) >= 0.0 { c } else { bisect(gap, c, nv.p_nv, 1e-10 * nv.p_nv, 300).unwrap_or(nv.p_nv) };
    let p_hi = if gap(p_top) >= 0.0 { p_top } else { bisect(gap, nv.p_nv, p_top, 1e-10 * nv.p_nv, 300).unwrap_or(nv.p_nv) };

    let var_at = |p: f64| match smallest_vpq_for(dist, p, m, demand) {
        Some(r) => variance_unchecked(dist, p, r, demand),
        None => f64::INFINITY,
    };
    let step = (p_hi - p_lo) / (GRID_POINTS - 1) as f64;
    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..GRID_POINTS {
        let v = var_at(p_lo + k as f64 * step);
        if v < best_v * (1.0 - 1e-12) {
            best_v = v;
            best_k = k;
        }
    }
    let a = p_lo + best_k.saturating_sub(1) as f64 * step;
    let b = p_lo + (best_k + 1).min(GRID_POINTS - 1) as f64 * step;
    let (mut p, mut v) = golden_section_min(var_at, a, b, 1e-9 * nv.p_nv);
    let grid_p = p_lo + best_k as f64 * step;
    if best_v < v {
        p = grid_p;
        v = best_v;
    }
    let r = smallest_vpq_for(dist, p, m, demand)
        .ok_or_else(|| Error::Numerical(format!("lost feasibility at P = {p} for m = {m}")))?;
    let d = Decision::new(p, r);
    Ok(NoHedgePoint { m, decision: d, q: d.quantity(demand), variance: v, risk: v.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mean_threshold: f64,
    pub mean_condition: bool,
    pub p0: f64,
    pub eps0: f64,
    pub f_star: f64,
    pub tail_lhs: f64,
    pub tail_rhs: f64,
    pub tail_condition: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.mean_condition && self.tail_condition
    }
}

/// Sufficient moment and tail conditions for a well-posed newsvendor.
pub fn check_assumptions(dist: &EmpiricalDist, demand: &DemandParams) -> Result<AssumptionReport> {
    demand.validate()?;
    if dist.len() < 1000 {
        return Err(Error::InvalidInput(format!(
            "assumption checks need at least 1000 samples, got {}",
            dist.len()
        )));
    }
    let (b, c, s) = (demand.b, demand.c, demand.s);
    let mu_a = dist.mean();
    let sigma_a = dist.std_dev();
    let mean_threshold = 0.5 * (sigma_a + 2.0 * b * c + (8.0 * b * (c - s) * sigma_a).sqrt());
    let p0 = dist.cdf(b * c);
    let eps0 = dist.negative_part_mean();
    let f_star = ((mu_a - b * c - 0.5 * sigma_a).powi(2) - 2.0 * b * (c - s) * sigma_a) / (4.0 * b);
    let tail_lhs = b * c * p0 + eps0;
    let tail_rhs = (2.0 * b * (c - s)).min(2.0 * (b * f_star.max(0.0)).sqrt());
    Ok(AssumptionReport {
        mu_a,
        sigma_a,
        mean_threshold,
        mean_condition: mu_a > mean_threshold,
        p0,
        eps0,
        f_star,
        tail_lhs,
        tail_rhs,
        tail_condition: tail_lhs <= tail_rhs,
    })
}
