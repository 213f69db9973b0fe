use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::closed_forms::ClosedForms;
use crate::error::{Error, Result};
use crate::newsvendor::Decision;
use crate::numeric::{norm_cdf, normal_call_part, trapezoid_weights};
use crate::processes::{DemandParams, EouParams, Measure, PathGrid, PathSimulator};
use crate::rng::{stream, StreamTag};

/// Sizes and seed of the nested simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedMcConfig {
    /// Outer real-world paths.
    pub n_outer: usize,
    /// Inner risk-neutral continuations per outer state.
    pub n_inner: usize,
    /// Terminal market-size samples for the profit distributions.
    pub n_terminal: usize,
    pub grid: PathGrid,
    pub seed: u64,
}

impl Default for NestedMcConfig {
    fn default() -> Self {
        Self { n_outer: 2000, n_inner: 500, n_terminal: 100_000, grid: PathGrid::default(), seed: 0 }
    }
}

impl NestedMcConfig {
    pub fn validate(&self, params: &EouParams) -> Result<()> {
        if self.n_outer < 2 || self.n_inner == 0 || self.n_terminal < 2 {
            return Err(Error::InvalidInput(format!(
                "need n_outer >= 2, n_inner >= 1 and n_terminal >= 2, got {}, {}, {}",
                self.n_outer, self.n_inner, self.n_terminal
            )));
        }
        self.grid.check_matches(params)
    }

    /// Whether the sizes reach the floor recommended for reported results.
    pub fn is_production_scale(&self) -> bool {
        self.n_outer >= 100 && self.n_inner >= 50
    }
}

/// Fill `out` with `n_inner` trapezoid integrals of a unit-start risk-neutral
/// price over `steps` grid steps.
pub(crate) fn inner_integrals<R: Rng + ?Sized>(
    sigma: f64,
    dt: f64,
    steps: usize,
    n_inner: usize,
    rng: &mut R,
    out: &mut Vec<f32>,
) {
    out.clear();
    let drift = -0.5 * sigma * sigma * dt;
    let vol = sigma * dt.sqrt();
    for _ in 0..n_inner {
        let mut log_x = 0.0f64;
        let mut acc = 0.5;
        for l in 1..=steps {
            let z: f64 = rng.sample(StandardNormal);
            log_x += drift + vol * z;
            let x = log_x.exp();
            acc += if l == steps { 0.5 * x } else { x };
        }
        out.push((acc * dt) as f32);
    }
}

/// Inner-sample averages needed by the conditional hedge quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConditionalMoments {
    /// `P^M(A_T <= R | state)`.
    pub fill_prob: f64,
    /// `E^M[1{A_T <= R} I]`, with `I` the remaining integral of the unit-start price.
    pub weighted_fill: f64,
    /// `E^M[(R - A_T)^+ | state]`.
    pub overage: f64,
}

/// State of an outer path at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub tau: f64,
    pub x: f64,
    /// Market size accumulated so far, `C_t + sigma_tilde * Btilde_t`.
    pub a: f64,
}

pub fn conditional_moments(
    state: &MarketState,
    integrals: &[f32],
    r: f64,
    demand: &DemandParams,
) -> ConditionalMoments {
    if state.tau <= 0.0 || integrals.is_empty() {
        let u = r - state.a;
        return ConditionalMoments {
            fill_prob: if u >= 0.0 { 1.0 } else { 0.0 },
            weighted_fill: 0.0,
            overage: u.max(0.0),
        };
    }
    let sd = demand.sigma_tilde * state.tau.sqrt();
    let base = r - state.a - demand.mu0 * state.tau;
    let slope = demand.mu1 * state.x;
    let (mut p, mut w, mut o) = (0.0, 0.0, 0.0);
    for &i in integrals {
        let i = i as f64;
        let u = base - slope * i;
        let phi = if sd > 0.0 {
            norm_cdf(u / sd)
        } else if u >= 0.0 {
            1.0
        } else {
            0.0
        };
        p += phi;
        w += phi * i;
        o += normal_call_part(u, sd);
    }
    let n = integrals.len() as f64;
    ConditionalMoments { fill_prob: p / n, weighted_fill: w / n, overage: o / n }
}

/// `delta_t`: loading of the payoff on the demand noise.
pub fn delta_from(moments: &ConditionalMoments, d: &Decision, demand: &DemandParams) -> f64 {
    demand.sigma_tilde * (d.p - demand.s) * moments.fill_prob
}

/// `xi_t`: loading of the payoff on the asset price.
pub fn xi_from(moments: &ConditionalMoments, d: &Decision, demand: &DemandParams) -> f64 {
    (d.p - demand.s) * demand.mu1 * moments.weighted_fill
}

/// `V_t`: risk-neutral conditional expected payoff.
pub fn projected_payoff_from(moments: &ConditionalMoments, d: &Decision, demand: &DemandParams) -> f64 {
    (d.p - demand.c) * (d.r - demand.b * d.p) - (d.p - demand.s) * moments.overage
}

/// Grid index for a time `t`, which must lie on the grid.
fn grid_index(t: f64, grid: &PathGrid) -> Result<usize> {
    let j = (t / grid.dt).round();
    if j < 0.0 || j > grid.n_steps as f64 || (j * grid.dt - t).abs() > 1e-9 * grid.dt.max(1.0) {
        return Err(Error::InvalidInput(format!("time {t} is not on the simulation grid")));
    }
    Ok(j as usize)
}

fn standalone_moments(
    t: f64,
    x: f64,
    a_partial: f64,
    d: &Decision,
    params: &EouParams,
    demand: &DemandParams,
    cfg: &NestedMcConfig,
) -> Result<ConditionalMoments> {
    params.validate()?;
    demand.validate()?;
    d.validate(demand)?;
    cfg.grid.check_matches(params)?;
    let j = grid_index(t, &cfg.grid)?;
    if j == cfg.grid.n_steps {
        return Err(Error::InvalidInput("conditional loadings need t < T".into()));
    }
    let steps = cfg.grid.n_steps - j;
    let mut rng = stream(cfg.seed, StreamTag::HedgeInner, &[u64::MAX, j as u64]);
    let mut buf = Vec::with_capacity(cfg.n_inner);
    inner_integrals(params.sigma, cfg.grid.dt, steps, cfg.n_inner, &mut rng, &mut buf);
    let state = MarketState { tau: steps as f64 * cfg.grid.dt, x, a: a_partial };
    Ok(conditional_moments(&state, &buf, d.r, demand))
}

/// `delta_t` at one state from a fresh inner sample of `cfg.n_inner` paths.
pub fn delta_t(
    t: f64,
    x: f64,
    a_partial: f64,
    d: &Decision,
    params: &EouParams,
    demand: &DemandParams,
    cfg: &NestedMcConfig,
) -> Result<f64> {
    let m = standalone_moments(t, x, a_partial, d, params, demand, cfg)?;
    Ok(delta_from(&m, d, demand))
}

/// `xi_t` at one state from a fresh inner sample of `cfg.n_inner` paths.
pub fn xi_t(
    t: f64,
    x: f64,
    a_partial: f64,
    d: &Decision,
    params: &EouParams,
    demand: &DemandParams,
    cfg: &NestedMcConfig,
) -> Result<f64> {
    let m = standalone_moments(t, x, a_partial, d, params, demand, cfg)?;
    Ok(xi_from(&m, d, demand))
}

/// Cached outer paths and sorted inner integrals.
///
/// Construction is the expensive part; afterwards the unhedgeable-risk
/// factor for any VPQ is a pass over the cache, with common random numbers
/// across every decision evaluated.
#[derive(Debug, Clone)]
pub struct NestedMc {
    params: EouParams,
    demand: DemandParams,
    cfg: NestedMcConfig,
    forms: ClosedForms,
    n_points: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    a: Vec<f64>,
    asset_bm: Vec<f64>,
    demand_bm: Vec<f64>,
    ratio: Vec<f64>,
    inner: Vec<f32>,
    weights: Vec<f64>,
}

/// `G(R)` with its Monte Carlo standard error. The squared unhedgeable risk
/// is `sigma_tilde^2 (P - s)^2 G(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnhedgeableFactor {
    pub value: f64,
    pub std_error: f64,
}

impl NestedMc {
    pub fn build(params: &EouParams, demand: &DemandParams, cfg: &NestedMcConfig) -> Result<Self> {
        params.validate()?;
        demand.validate()?;
        cfg.validate(params)?;
        let forms = ClosedForms::new(params)?;
        let grid = cfg.grid;
        let n_points = grid.n_points();
        let n_outer = cfg.n_outer;
        let sim = PathSimulator::new(params, demand, &grid, Measure::Real)?;

        let mut x = vec![0.0; n_outer * n_points];
        let mut y = vec![0.0; n_outer * n_points];
        let mut a = vec![0.0; n_outer * n_points];
        let mut asset_bm = vec![0.0; n_outer * n_points];
        let mut demand_bm = vec![0.0; n_outer * n_points];
        x.par_chunks_mut(n_points)
            .zip(y.par_chunks_mut(n_points))
            .zip(a.par_chunks_mut(n_points))
            .zip(asset_bm.par_chunks_mut(n_points))
            .zip(demand_bm.par_chunks_mut(n_points))
            .enumerate()
            .for_each(|(i, ((((xs, ys), as_), bs), ws))| {
                let mut rng = stream(cfg.seed, StreamTag::HedgeOuter, &[i as u64]);
                sim.walk(&mut rng, |j, pt| {
                    xs[j] = pt.x;
                    ys[j] = pt.y;
                    as_[j] = pt.c + demand.sigma_tilde * pt.demand_bm;
                    bs[j] = pt.asset_bm;
                    ws[j] = pt.demand_bm;
                });
            });

        let mut ratio = vec![0.0; n_outer * n_points];
        for (k, r) in ratio.iter_mut().enumerate() {
            *r = forms.z_ratio(grid.time(k % n_points), y[k])?;
        }

        let block = grid.n_steps * cfg.n_inner;
        let mut inner = vec![0.0f32; n_outer * block];
        inner.par_chunks_mut(block).enumerate().for_each(|(i, chunk)| {
            let mut buf = Vec::with_capacity(cfg.n_inner);
            for j in 0..grid.n_steps {
                let mut rng = stream(cfg.seed, StreamTag::HedgeInner, &[i as u64, j as u64]);
                inner_integrals(params.sigma, grid.dt, grid.n_steps - j, cfg.n_inner, &mut rng, &mut buf);
                buf.sort_by(f32::total_cmp);
                chunk[j * cfg.n_inner..(j + 1) * cfg.n_inner].copy_from_slice(&buf);
            }
        });

        Ok(Self {
            params: *params,
            demand: *demand,
            cfg: *cfg,
            forms,
            n_points,
            x,
            y,
            a,
            asset_bm,
            demand_bm,
            ratio,
            inner,
            weights: trapezoid_weights(n_points, grid.dt),
        })
    }

    pub fn params(&self) -> &EouParams {
        &self.params
    }

    pub fn demand(&self) -> &DemandParams {
        &self.demand
    }

    pub fn config(&self) -> &NestedMcConfig {
        &self.cfg
    }

    pub fn forms(&self) -> &ClosedForms {
        &self.forms
    }

    pub fn n_outer(&self) -> usize {
        self.cfg.n_outer
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_points + j
    }

    pub fn state(&self, i: usize, j: usize) -> MarketState {
        let k = self.idx(i, j);
        MarketState { tau: (self.cfg.grid.n_steps - j) as f64 * self.cfg.grid.dt, x: self.x[k], a: self.a[k] }
    }

    pub fn x_path(&self, i: usize) -> &[f64] {
        &self.x[self.idx(i, 0)..self.idx(i, 0) + self.n_points]
    }

    pub fn y_path(&self, i: usize) -> &[f64] {
        &self.y[self.idx(i, 0)..self.idx(i, 0) + self.n_points]
    }

    pub fn asset_bm_path(&self, i: usize) -> &[f64] {
        &self.asset_bm[self.idx(i, 0)..self.idx(i, 0) + self.n_points]
    }

    pub fn demand_bm_path(&self, i: usize) -> &[f64] {
        &self.demand_bm[self.idx(i, 0)..self.idx(i, 0) + self.n_points]
    }

    /// Terminal market size of outer path `i`.
    pub fn terminal_market_size(&self, i: usize) -> f64 {
        self.a[self.idx(i, self.n_points - 1)]
    }

    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.ratio[self.idx(i, j)]
    }

    /// Sorted inner integrals for outer path `i` at grid index `j < n_steps`.
    pub fn inner(&self, i: usize, j: usize) -> &[f32] {
        let n = self.cfg.n_inner;
        let start = (i * self.cfg.grid.n_steps + j) * n;
        &self.inner[start..start + n]
    }

    pub fn moments(&self, i: usize, j: usize, r: f64) -> ConditionalMoments {
        let st = self.state(i, j);
        if j == self.cfg.grid.n_steps {
            conditional_moments(&st, &[], r, &self.demand)
        } else {
            conditional_moments(&st, self.inner(i, j), r, &self.demand)
        }
    }

    /// Fill probability using the sorted cache, skipping inner samples whose
    /// normal CDF is saturated at 0 or 1.
    fn fill_prob_sorted(&self, i: usize, j: usize, r: f64) -> f64 {
        const CUT: f64 = 8.5;
        let st = self.state(i, j);
        if j == self.cfg.grid.n_steps {
            return if r - st.a >= 0.0 { 1.0 } else { 0.0 };
        }
        let sd = self.demand.sigma_tilde * st.tau.sqrt();
        let ints = self.inner(i, j);
        let n = ints.len();
        if sd <= 0.0 {
            return conditional_moments(&st, ints, r, &self.demand).fill_prob;
        }
        let z0 = (r - st.a - self.demand.mu0 * st.tau) / sd;
        let beta = self.demand.mu1 * st.x / sd;
        if beta == 0.0 {
            return norm_cdf(z0);
        }
        // z_k = z0 - beta I_k, monotone in k
        let t_one = (z0 - CUT) / beta;
        let t_zero = (z0 + CUT) / beta;
        let (lo, hi, ones) = if beta > 0.0 {
            let lo = ints.partition_point(|&v| (v as f64) <= t_one);
            let hi = ints.partition_point(|&v| (v as f64) < t_zero);
            (lo, hi, lo)
        } else {
            let lo = ints.partition_point(|&v| (v as f64) <= t_zero);
            let hi = ints.partition_point(|&v| (v as f64) < t_one);
            (lo, hi, n - hi)
        };
        let mut acc = ones as f64;
        for &v in &ints[lo..hi.max(lo)] {
            acc += norm_cdf(z0 - beta * v as f64);
        }
        acc / n as f64
    }

    /// `G(R) = int_0^T E[(Z_t/Z_t^M) * P^M(A_T <= R | F_t)^2] dt`.
    pub fn unhedgeable_factor(&self, r: f64) -> UnhedgeableFactor {
        let per_path: Vec<f64> = (0..self.cfg.n_outer)
            .into_par_iter()
            .map(|i| {
                (0..self.n_points)
                    .map(|j| {
                        let q = self.fill_prob_sorted(i, j, r);
                        self.weights[j] * self.ratio(i, j) * q * q
                    })
                    .sum::<f64>()
            })
            .collect();
        let (value, std_error) = crate::numeric::mean_and_se(&per_path);
        UnhedgeableFactor { value, std_error }
    }

    pub fn unhedgeable_sq(&self, d: &Decision) -> (f64, f64) {
        let g = self.unhedgeable_factor(d.r);
        let k = (self.demand.sigma_tilde * (d.p - self.demand.s)).powi(2);
        (k * g.value, k * g.std_error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{sport, wti};
    use crate::numeric::mean_and_se;

    fn small_cfg() -> NestedMcConfig {
        NestedMcConfig { n_outer: 40, n_inner: 64, n_terminal: 1000, grid: PathGrid::default(), seed: 3 }
    }

    #[test]
    fn sorted_fill_matches_plain_sum() {
        let params = wti(40.0);
        let demand = sport();
        let mc = NestedMc::build(&params, &demand, &small_cfg()).unwrap();
        for r in [60_000.0, 95_000.0, 100_000.0, 104_000.0, 140_000.0] {
            for i in [0, 7, 39] {
                for j in [0, 10, 20, 21] {
                    let fast = mc.fill_prob_sorted(i, j, r);
                    let slow = mc.moments(i, j, r).fill_prob;
                    assert!((fast - slow).abs() < 1e-14, "{fast} {slow}");
                }
            }
        }
        // a steep slope forces saturated ranges on both sides
        let steep = DemandParams { mu1: -2.0e6, ..demand };
        let mc = NestedMc::build(&params, &steep, &small_cfg()).unwrap();
        let r = mc.state(3, 0).a + steep.mu0 / 12.0 + steep.mu1 * 40.0 / 12.0;
        for j in [0, 5, 20] {
            let fast = mc.fill_prob_sorted(3, j, r);
            let slow = mc.moments(3, j, r).fill_prob;
            assert!((fast - slow).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_with_seed() {
        let params = wti(40.0);
        let demand = sport();
        let a = NestedMc::build(&params, &demand, &small_cfg()).unwrap();
        let b = NestedMc::build(&params, &demand, &small_cfg()).unwrap();
        assert_eq!(a.unhedgeable_factor(100_000.0), b.unhedgeable_factor(100_000.0));
        assert_eq!(a.inner, b.inner);
    }

    #[test]
    fn loadings_trivial_limits() {
        let params = wti(40.0);
        let demand = sport();
        let cfg = small_cfg();
        let t = 5.0 / 252.0;
        let at_cost = Decision::new(demand.c, 200_000.0);
        let dec = Decision::new(demand.c, 1e9);
        let a = 30_000.0;
        let big = delta_t(t, 40.0, a, &dec, &params, &demand, &cfg).unwrap();
        assert!((big - demand.sigma_tilde * demand.c).abs() < 1e-9 * big);
        let no_link = DemandParams { mu1: 0.0, ..demand };
        assert_eq!(xi_t(t, 40.0, a, &at_cost, &params, &no_link, &cfg).unwrap(), 0.0);
        let xi = xi_t(t, 40.0, 80_000.0, &Decision::new(40_000.0, 100_000.0), &params, &demand, &cfg).unwrap();
        assert!(xi < 0.0);
        let up = DemandParams { mu1: 2000.0, ..demand };
        let xi = xi_t(t, 40.0, 80_000.0, &Decision::new(40_000.0, 100_000.0), &params, &up, &cfg).unwrap();
        assert!(xi > 0.0);
        assert!(delta_t(1.0 / 12.0, 40.0, a, &dec, &params, &demand, &cfg).is_err());
        assert!(delta_t(0.5 / 252.0, 40.0, a, &dec, &params, &demand, &cfg).is_err());
    }

    #[test]
    fn delta_zero_at_salvage_price() {
        let demand = DemandParams { s: 10_000.0, ..sport() };
        let m = ConditionalMoments { fill_prob: 0.7, weighted_fill: 0.05, overage: 100.0 };
        assert_eq!(delta_from(&m, &Decision::new(10_000.0, 90_000.0), &demand), 0.0);
        assert_eq!(xi_from(&m, &Decision::new(10_000.0, 90_000.0), &demand), 0.0);
    }

    #[test]
    fn delta_matches_direct_conditional_probability() {
        // brute-force continuation: simulate the rest of the month under the
        // risk-neutral measure and count how often demand stays below R
        let params = wti(40.0);
        let demand = sport();
        let cfg = NestedMcConfig { n_inner: 4000, seed: 11, ..small_cfg() };
        let j = 6;
        let t = j as f64 / 252.0;
        let (x, a) = (43.0, 31_000.0);
        let d = Decision::new(42_000.0, 100_500.0);
        let delta = delta_t(t, x, a, &d, &params, &demand, &cfg).unwrap();
        let steps = 21 - j;
        let dt = 1.0 / 252.0;
        let tau = steps as f64 * dt;
        let mut rng = stream(99, StreamTag::Calibration, &[1]);
        let n = 10_000;
        let hits: Vec<f64> = (0..n)
            .map(|_| {
                let mut lx = x.ln();
                let mut c = 0.0;
                let mut prev = demand.rate(x);
                for _ in 0..steps {
                    let z: f64 = rng.sample(StandardNormal);
                    lx += -0.5 * params.sigma * params.sigma * dt + params.sigma * dt.sqrt() * z;
                    let rate = demand.rate(lx.exp());
                    c += 0.5 * dt * (prev + rate);
                    prev = rate;
                }
                let z: f64 = rng.sample(StandardNormal);
                let a_t = a + c + demand.sigma_tilde * tau.sqrt() * z;
                if a_t <= d.r { 1.0 } else { 0.0 }
            })
            .collect();
        let (p, se) = mean_and_se(&hits);
        let scale = demand.sigma_tilde * (d.p - demand.s);
        // the inner estimate averages conditional probabilities, so its own
        // error is far below the brute-force one
        assert!((delta / scale - p).abs() < 3.0 * se * 1.05, "{} vs {p} ± {se}", delta / scale);
    }

    #[test]
    fn xi_is_price_derivative_of_projected_payoff() {
        let params = wti(40.0);
        let demand = sport();
        let cfg = small_cfg();
        let mut rng = stream(5, StreamTag::HedgeInner, &[0, 0]);
        let mut ints = Vec::new();
        inner_integrals(params.sigma, cfg.grid.dt, 15, 500, &mut rng, &mut ints);
        let d = Decision::new(42_000.0, 100_500.0);
        let st = MarketState { tau: 15.0 / 252.0, x: 45.0, a: 28_000.0 };
        let h = 0.01 * st.x;
        let v = |x: f64| {
            let m = conditional_moments(&MarketState { x, ..st }, &ints, d.r, &demand);
            projected_payoff_from(&m, &d, &demand)
        };
        let fd = (v(st.x + h) - v(st.x - h)) / (2.0 * h);
        let xi = xi_from(&conditional_moments(&st, &ints, d.r, &demand), &d, &demand);
        assert!((fd - xi).abs() < 0.05 * xi.abs(), "{fd} vs {xi}");
    }

    #[test]
    fn delta_monotone_in_price_and_vpq() {
        let params = wti(40.0);
        let demand = sport();
        let mc = NestedMc::build(&params, &demand, &small_cfg()).unwrap();
        for i in 0..10 {
            for j in [0, 8, 20] {
                for r in [95_000.0, 99_000.0, 101_000.0, 104_000.0] {
                    for p in [40_000.0, 41_000.0, 42_000.0] {
                        let d = Decision::new(p, r);
                        let m = mc.moments(i, j, r);
                        let v = delta_from(&m, &d, &demand);
                        let d2 = Decision::new(p + 100.0, r + 100.0);
                        let v2 = delta_from(&mc.moments(i, j, r + 100.0), &d2, &demand);
                        assert!(v2 >= v);
                    }
                }
            }
        }
    }

    #[test]
    fn ratios_bounded_and_unit_at_maturity() {
        let mc = NestedMc::build(&wti(40.0), &sport(), &small_cfg()).unwrap();
        for i in 0..mc.n_outer() {
            for j in 0..22 {
                let r = mc.ratio(i, j);
                assert!((0.0..=1.0).contains(&r));
            }
            assert_eq!(mc.ratio(i, 21), 1.0);
        }
    }
}
