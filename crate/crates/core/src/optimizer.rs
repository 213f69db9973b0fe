//! Variance-minimising price and VPQ under hedging, the hedged efficient
//! frontier, and the structural bounds relating the hedged decision to the
//! newsvendor solutions under both measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Impact;
use crate::error::{Error, Result};
use crate::hedging::{Evaluation, HedgingModel, VarianceBreakdown};
use crate::newsvendor::{solve_newsvendor, Decision, EmpiricalDist, NvSolution};
use crate::numeric::{bisect, golden_section_min};
use crate::processes::DemandParams;

/// Relative width at which the VPQ line search stops.
pub const VPQ_TOLERANCE: f64 = 1e-5;
/// Relative width at which the price line search stops.
pub const PRICE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub m: f64,
    pub p: f64,
    pub r: f64,
    pub q: f64,
    pub risk: f64,
    pub breakdown: VarianceBreakdown,
    pub v0: f64,
    pub production_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub m: f64,
    pub decision: Decision,
    pub evaluation: Evaluation,
}

impl Optimum {
    pub fn frontier_point(&self, demand: &DemandParams) -> FrontierPoint {
        let b = self.evaluation.breakdown;
        FrontierPoint {
            m: self.m,
            p: self.decision.p,
            r: self.decision.r,
            q: self.decision.quantity(demand),
            risk: b.risk(),
            breakdown: b,
            v0: self.evaluation.v0,
            production_share: self.evaluation.v0 / self.m,
        }
    }
}

/// Newsvendor optimum under the risk-neutral market-size distribution.
pub fn risk_neutral_newsvendor(dist_m: &EmpiricalDist, demand: &DemandParams) -> Result<NvSolution> {
    solve_newsvendor(dist_m, demand)
}

/// Best price for a fixed VPQ given the two VPQ-dependent inputs of `B`:
/// the risk-neutral expected overage and the unhedgeable factor.
fn best_price(demand: &DemandParams, z0m: f64, m: f64, r: f64, overage: f64, g: f64) -> (f64, f64) {
    let (b, c, s) = (demand.b, demand.c, demand.s);
    // V0(P) = -b P^2 + beta P + gamma for fixed R
    let beta = r + b * c - overage;
    let gamma = -c * r + s * overage;
    let v0 = |p: f64| (-b * p + beta) * p + gamma;
    let k = demand.sigma_tilde * demand.sigma_tilde * g;
    let obj = |p: f64| (m - v0(p)).powi(2) / (z0m - 1.0) + k * (p - s).powi(2);
    let p_peak = beta / (2.0 * b);
    let disc = beta * beta - 4.0 * b * (m - gamma);
    let p_bar = if disc >= 0.0 && v0(p_peak) >= m {
        // smaller root, written to avoid cancellation
        2.0 * (m - gamma) / (beta + disc.sqrt())
    } else {
        p_peak
    };
    let p_bar = p_bar.min(r / b);
    if p_bar <= c {
        return (c, obj(c));
    }
    golden_section_min(obj, c, p_bar, PRICE_TOLERANCE * c)
}

/// Minimise `B(m, P, R)`: golden-section over `R` in `[bc, R^NV(M)]`, and for
/// each `R` golden-section over `P` up to the smallest price reaching `m`
/// (or the `V0` maximiser when `m` is out of reach).
pub fn minimize_b(model: &HedgingModel, m: f64) -> Result<Optimum> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidInput(format!("target mean must be positive, got {m}")));
    }
    let demand = *model.demand();
    let nvm = risk_neutral_newsvendor(model.dist_risk_neutral(), &demand)?;
    let r_lo = demand.b * demand.c;
    let r_hi = nvm.r_nv;
    if r_hi <= r_lo {
        return Err(Error::Degenerate(format!("VPQ search interval [{r_lo}, {r_hi}] is empty")));
    }
    let dist_m = model.dist_risk_neutral();
    let z0m = model.z0m();
    let inner = |r: f64| {
        let g = model.engine().unhedgeable_factor(r).value;
        best_price(&demand, z0m, m, r, dist_m.expected_overage(r), g)
    };
    let (r, _) = golden_section_min(|r| inner(r).1, r_lo, r_hi, VPQ_TOLERANCE * r_hi);
    let (p, _) = inner(r);
    let decision = Decision::new(p, r);
    let evaluation = model.evaluate(m, &decision)?;
    Ok(Optimum { m, decision, evaluation })
}

/// Hedged frontier over a grid of target means; risk must not fall as `m` rises.
pub fn efficient_frontier(model: &HedgingModel, m_grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    let demand = *model.demand();
    let pts = m_grid
        .par_iter()
        .map(|&m| minimize_b(model, m).map(|o| o.frontier_point(&demand)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].m.total_cmp(&pts[b].m));
    for w in order.windows(2) {
        let (lo, hi) = (&pts[w[0]], &pts[w[1]]);
        if hi.m > lo.m && hi.risk < lo.risk * (1.0 - 1e-6) {
            return Err(Error::Consistency(format!(
                "hedged risk fell from {} at m = {} to {} at m = {}",
                lo.risk, lo.m, hi.risk, hi.m
            )));
        }
    }
    Ok(pts)
}

/// Relative slack accepted when deciding which side of the hurting
/// condition an instance falls on.
pub const HURTING_BOUNDARY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurtingReport {
    pub p_circ: f64,
    pub r_circ_ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; grows as the asset hurts demand more strongly.
    pub hurting_factor: f64,
    pub satisfied: bool,
}

/// Condition under which hedging cannot raise the VPQ above the newsvendor level
/// when the asset trend hurts demand.
pub fn hurting_condition(dist_m: &EmpiricalDist, nv: &NvSolution, demand: &DemandParams) -> Result<HurtingReport> {
    let (b, c, s) = (demand.b, demand.c, demand.s);
    let p_circ = (dist_m.expected_sales(nv.r_nv) + b * c) / (2.0 * b);
    let ratio = (p_circ - s) / (nv.p_nv - s);
    if ratio < 1.0 - HURTING_BOUNDARY_TOLERANCE {
        return Err(Error::Consistency(format!(
            "price ratio {ratio} below 1: the risk-neutral market is not larger"
        )));
    }
    let rc = ratio.max(1.0);
    let lhs = (nv.p_nv - s) / (rc + (rc * rc - 1.0).sqrt()) * dist_m.prob_at_least(nv.r_nv);
    let rhs = c - s;
    Ok(HurtingReport {
        p_circ,
        r_circ_ratio: ratio,
        lhs,
        rhs,
        hurting_factor: rhs - lhs,
        satisfied: lhs <= rhs * (1.0 + HURTING_BOUNDARY_TOLERANCE),
    })
}

/// Upper bound on the hedged VPQ when the hurting condition fails.
pub fn compute_r_circ(
    dist_m: &EmpiricalDist,
    nv: &NvSolution,
    nvm: &NvSolution,
    demand: &DemandParams,
) -> Result<f64> {
    let rep = hurting_condition(dist_m, nv, demand)?;
    if rep.satisfied {
        return Err(Error::NotApplicable("hurting condition holds, so R^NV already bounds the VPQ".into()));
    }
    let (b, c, s) = (demand.b, demand.c, demand.s);
    let rc = rep.r_circ_ratio.max(1.0);
    let target = (nv.p_nv - s) * (2.0 * b * rep.p_circ - b * c) / ((c - s) * (rc + (rc * rc - 1.0).sqrt())) - nv.r_nv;
    let t_of = |r: f64| dist_m.partial_mean_below(r) / dist_m.prob_at_least(r);
    let (lo, hi) = (nv.r_nv, nvm.r_nv.max(nv.r_nv));
    if t_of(lo) >= target {
        return Ok(lo);
    }
    if t_of(hi) < target {
        return Err(Error::Consistency(format!(
            "no VPQ in [{lo}, {hi}] reaches the bound {target}"
        )));
    }
    bisect(|r| t_of(r) - target, lo, hi, 1e-9 * hi, 300)
        .ok_or_else(|| Error::Numerical("bisection for the VPQ bound failed".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub impact: Impact,
    pub m: f64,
    pub p_nv: f64,
    pub r_nv: f64,
    pub p_nvm: f64,
    pub r_nvm: f64,
    pub p_h: f64,
    pub r_h: f64,
    pub v0_h: f64,
    pub v0_se: f64,
    pub hurting: Option<HurtingReport>,
    pub r_circ: Option<f64>,
    /// Resolution of the VPQ search, used as slack on VPQ comparisons.
    pub vpq_resolution: f64,
}

impl BoundsReport {
    pub fn price_below_nv(&self) -> bool {
        self.p_h <= self.p_nv
    }

    pub fn below_risk_neutral_nv(&self) -> bool {
        self.p_h <= self.p_nvm && self.r_h <= self.r_nvm + self.vpq_resolution
    }

    pub fn v0_within_target(&self) -> bool {
        self.v0_h <= self.m + 2.0 * self.v0_se
    }

    /// `Some` only when the hurting condition fails and the `R°` bound applies.
    pub fn vpq_below_r_circ(&self) -> Option<bool> {
        self.r_circ.map(|rc| self.r_h <= rc + self.vpq_resolution)
    }

    /// VPQ bound of the positive-impact case, `R^h <= R^NV`.
    pub fn vpq_below_nv(&self) -> bool {
        self.r_h <= self.r_nv + self.vpq_resolution
    }

    pub fn all_hold(&self) -> bool {
        self.price_below_nv()
            && self.below_risk_neutral_nv()
            && self.v0_within_target()
            && self.vpq_below_r_circ().unwrap_or(true)
            && (self.impact != Impact::Positive || self.vpq_below_nv())
    }
}

pub fn bounds_report(model: &HedgingModel, nv: &NvSolution, opt: &Optimum, impact: Impact) -> Result<BoundsReport> {
    let demand = *model.demand();
    let dist_m = model.dist_risk_neutral();
    let nvm = risk_neutral_newsvendor(dist_m, &demand)?;
    let (hurting, r_circ) = if impact == Impact::Negative {
        let h = hurting_condition(dist_m, nv, &demand)?;
        let rc = if h.satisfied { None } else { Some(compute_r_circ(dist_m, nv, &nvm, &demand)?) };
        (Some(h), rc)
    } else {
        (None, None)
    };
    Ok(BoundsReport {
        impact,
        m: opt.m,
        p_nv: nv.p_nv,
        r_nv: nv.r_nv,
        p_nvm: nvm.p_nv,
        r_nvm: nvm.r_nv,
        p_h: opt.decision.p,
        r_h: opt.decision.r,
        v0_h: opt.evaluation.v0,
        v0_se: opt.evaluation.v0_se,
        hurting,
        r_circ,
        vpq_resolution: VPQ_TOLERANCE * nvm.r_nv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedging::NestedMcConfig;
    use crate::instances::{compact, sport, wti};
    use crate::numeric::norm_cdf;
    use crate::processes::PathGrid;

    fn cfg(seed: u64) -> NestedMcConfig {
        NestedMcConfig { n_outer: 120, n_inner: 60, n_terminal: 20_000, grid: PathGrid::default(), seed }
    }

    #[test]
    fn best_price_matches_dense_scan() {
        let demand = sport();
        let (z0m, m, r, over, g) = (1.08, 103e6, 100_000.0, 1300.0, 0.08);
        let (p, v) = best_price(&demand, z0m, m, r, over, g);
        let v0 = |p: f64| (p - demand.c) * (r - demand.b * p) - p * over;
        let obj = |p: f64| (m - v0(p)).powi(2) / (z0m - 1.0) + demand.sigma_tilde.powi(2) * g * p * p;
        let mut best = (f64::NAN, f64::INFINITY);
        let hi = r / demand.b;
        for k in 0..=200_000 {
            let q = demand.c + (hi - demand.c) * k as f64 / 200_000.0;
            if obj(q) < best.1 {
                best = (q, obj(q));
            }
        }
        assert!(v <= best.1 * (1.0 + 1e-9), "{p} {v} vs {best:?}");
        assert!((p - best.0).abs() < 1e-3 * p);
    }

    #[test]
    fn degenerate_market_picks_smallest_vpq_reaching_target() {
        let demand = DemandParams { sigma_tilde: 0.0, mu1: 0.0, ..sport() };
        let model = HedgingModel::build(&wti(40.0), &demand, &cfg(1)).unwrap();
        let nv = solve_newsvendor(model.dist_real(), &demand).unwrap();
        let m = 0.9 * nv.profit;
        let opt = minimize_b(&model, m).unwrap();
        assert!(opt.evaluation.breakdown.total < 1e-9 * m * m);
        assert_eq!(opt.evaluation.breakdown.unhedgeable_sq, 0.0);
        // with a point-mass market the smallest VPQ is the one at which
        // the best achievable V0 first reaches m
        let a0 = model.dist_real().min();
        let (b, c) = (demand.b, demand.c);
        // for R <= a0 the overage vanishes and max_P V0 = (R - bc)^2 / (4b)
        let r_min = b * c + (4.0 * b * m).sqrt();
        assert!(r_min < a0);
        assert!((opt.decision.r - r_min).abs() < 2.0 * VPQ_TOLERANCE * nv.r_nv, "{} {r_min}", opt.decision.r);
    }

    #[test]
    fn hurting_boundary_without_asset_link() {
        let n = 50_000;
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                103_600.0 + 3342.0 * bisect(|z| norm_cdf(z) - u, -9.0, 9.0, 1e-12, 200).unwrap()
            })
            .collect();
        let dist = EmpiricalDist::new(v).unwrap();
        let demand = DemandParams { mu1: 0.0, ..sport() };
        let nv = solve_newsvendor(&dist, &demand).unwrap();
        let rep = hurting_condition(&dist, &nv, &demand).unwrap();
        assert!((rep.r_circ_ratio - 1.0).abs() < 1e-12);
        assert!((rep.lhs - rep.rhs).abs() < 2.0 * nv.p_nv / n as f64 + 1e-9 * rep.rhs);
        assert!(rep.satisfied);
        assert!(matches!(compute_r_circ(&dist, &nv, &nv, &demand), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn sport_bounds_small_scale() {
        let model = HedgingModel::build(&wti(40.0), &sport(), &cfg(4)).unwrap();
        let nv = solve_newsvendor(model.dist_real(), model.demand()).unwrap();
        let nvm = risk_neutral_newsvendor(model.dist_risk_neutral(), model.demand()).unwrap();
        assert!(nvm.p_nv >= nv.p_nv);
        let opt = minimize_b(&model, nv.profit).unwrap();
        let rep = bounds_report(&model, &nv, &opt, Impact::Negative).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
    }

    #[test]
    fn compact_risk_neutral_price_lower() {
        let model = HedgingModel::build(&wti(40.0), &compact(), &cfg(5)).unwrap();
        let nv = solve_newsvendor(model.dist_real(), model.demand()).unwrap();
        let nvm = risk_neutral_newsvendor(model.dist_risk_neutral(), model.demand()).unwrap();
        assert!(nvm.p_nv <= nv.p_nv);
        let opt = minimize_b(&model, nv.profit).unwrap();
        assert!(opt.decision.p <= nv.p_nv && opt.decision.r <= nv.r_nv + VPQ_TOLERANCE * nvm.r_nv);
    }

    #[test]
    fn t_of_r_increasing_on_sample() {
        let model = HedgingModel::build(&wti(40.0), &sport(), &cfg(6)).unwrap();
        let d = model.dist_risk_neutral();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..200 {
            let r = 95_000.0 + 100.0 * k as f64;
            let t = d.partial_mean_below(r) / d.prob_at_least(r);
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn frontier_single_point_consistent() {
        let model = HedgingModel::build(&wti(40.0), &sport(), &cfg(7)).unwrap();
        let nv = solve_newsvendor(model.dist_real(), model.demand()).unwrap();
        let m = 0.95 * nv.profit;
        let f = efficient_frontier(&model, &[m]).unwrap();
        let o = minimize_b(&model, m).unwrap();
        assert_eq!(f[0].p, o.decision.p);
        assert_eq!(f[0].r, o.decision.r);
        assert!((f[0].risk.powi(2) - f[0].breakdown.total).abs() < 1e-6 * f[0].breakdown.total);
    }
}
