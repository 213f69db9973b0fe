use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{Datelike, NaiveDate, Weekday};
use nvhedge::calibration::{
    calibrate_demand, dominance_report, fit_eou, CalibrationBudget, DominanceConfig, DominanceReport, FitReport,
};
use nvhedge::hedging::{HedgingModel, NestedMcConfig};
use nvhedge::instances::{by_name, monthly_demand, MONTH};
use nvhedge::newsvendor::{
    check_assumptions, frontier_no_hedge, payoff_variance, risk_decomposition_no_hedge, solve_newsvendor,
    AssumptionReport, Decision, NvSolution,
};
use nvhedge::optimizer::{bounds_report, efficient_frontier, minimize_b, BoundsReport};
use nvhedge::processes::{sample_market_size, simulate_paths, DemandParams, EouParams, Measure, PathGrid};
use nvhedge::strategy::{decompose_risk, simulate_strategy, RiskDecomposition};
use serde::{Deserialize, Serialize};

use crate::config::{AssetSource, DemandSource, RunConfig, Target};
use crate::io::{num, read_ops, read_prices, write_json, CsvOut};

pub const DAILY: f64 = 1.0 / 252.0;

#[derive(Serialize, Deserialize)]
struct AssetFile {
    params: EouParams,
    report: FitReport,
}

/// Monthly demand coefficients as they appear in configs.
#[derive(Serialize)]
struct MonthlyDemand {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b_coef: f64,
    b: f64,
    c: f64,
    sigma_tilde: f64,
    s: f64,
}

impl From<&DemandParams> for MonthlyDemand {
    fn from(d: &DemandParams) -> Self {
        Self { a: d.mu0 * MONTH, b_coef: d.mu1 * MONTH, b: d.b, c: d.c, sigma_tilde: d.sigma_tilde, s: d.s }
    }
}

fn millions(v: f64) -> String {
    if v.is_finite() {
        format!("{:.2}M", v / 1e6)
    } else {
        "n/a".into()
    }
}

pub fn calibrate_asset(prices: &Path, dt: f64, out: &Path) -> Result<()> {
    let series = read_prices(prices)?;
    let (params, report) = fit_eou(&series, dt)?;
    println!("{:<8} {:>12} {:>12}", "param", "estimate", "std_error");
    for k in ["kappa", "alpha", "sigma"] {
        println!("{k:<8} {:>12.6} {:>12.6}", report.estimates[k], report.std_errors[k]);
    }
    println!("observations {}, residual sd {:.6}, residual lag-1 autocorrelation {:.4}", report.n_obs, report.residual_sd, report.residual_autocorr);
    write_json(out, &AssetFile { params, report })?;
    println!("wrote {}", out.display());
    Ok(())
}

fn read_asset_json(path: &Path) -> Result<EouParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: AssetFile = serde_json::from_str(&text).with_context(|| format!("{} is not an asset file", path.display()))?;
    file.params.validate()?;
    Ok(file.params)
}

fn instance(name: &str) -> Result<DemandParams> {
    by_name(name).ok_or_else(|| anyhow!("unknown instance {name}; expected sport or compact"))
}

fn budget(cfg: &RunConfig) -> CalibrationBudget {
    CalibrationBudget {
        restarts: cfg.calib_restarts,
        max_iters: cfg.calib_max_iters,
        n_samples: cfg.calib_samples,
        seed: cfg.seed,
        ..CalibrationBudget::default()
    }
}

pub fn calibrate_demand_cmd(cfg: &RunConfig, ops_path: &Path, asset_path: &Path) -> Result<()> {
    let asset = read_asset_json(asset_path)?;
    let ops = read_ops(ops_path)?;
    let init = match &cfg.demand {
        None => instance("sport")?,
        Some(DemandSource::Instance(name)) => instance(name)?,
        Some(DemandSource::OpsCsv { init, .. }) => instance(init)?,
        Some(src @ DemandSource::Literal { .. }) => literal_demand(src),
    };
    let (demand, report) = calibrate_demand(&ops, &asset.with_x0(ops.x0[0]), &init, &budget(cfg))?;
    let monthly = MonthlyDemand::from(&demand);
    println!("{:<12} {:>14}", "param", "estimate");
    for (k, v) in [("A", monthly.a), ("B", monthly.b_coef), ("b", monthly.b), ("c", monthly.c), ("sigma_tilde", monthly.sigma_tilde)] {
        println!("{k:<12} {v:>14.4}");
    }
    println!(
        "objective {:.6e} ({:.3e} of data scale), converged {}",
        report.objective,
        report.objective / ops.data_scale(),
        report.converged
    );
    let out = cfg.output_dir.join("demand.json");
    write_json(&out, &serde_json::json!({ "demand": demand, "monthly": monthly, "report": report }))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn literal_demand(src: &DemandSource) -> DemandParams {
    match *src {
        DemandSource::Literal { a, b_coef, b, c, sigma_tilde, s } => {
            DemandParams { s, ..monthly_demand(a, b_coef, b, c, sigma_tilde) }
        }
        _ => unreachable!("called with a literal source"),
    }
}

/// Fully resolved model inputs.
pub struct Inputs {
    pub params: EouParams,
    pub demand: DemandParams,
    pub grid: PathGrid,
    pub seed: u64,
}

impl Inputs {
    pub fn resolve(cfg: &RunConfig) -> Result<Self> {
        let params = match cfg.asset.as_ref().ok_or_else(|| anyhow!("config needs an asset source"))? {
            AssetSource::Literal { kappa, alpha, sigma } => {
                let x0 = cfg.x0.ok_or_else(|| anyhow!("literal asset parameters need x0"))?;
                EouParams::new(*kappa, *alpha, *sigma, x0, MONTH)?
            }
            AssetSource::PricesCsv(path) => {
                let (p, _) = fit_eou(&read_prices(path)?, DAILY)?;
                cfg.x0.map_or(p, |x0| p.with_x0(x0))
            }
        };
        params.validate()?;
        let grid = PathGrid::for_horizon(MONTH, cfg.grid_steps)?;
        let demand = match cfg.demand.as_ref().ok_or_else(|| anyhow!("config needs a demand source"))? {
            DemandSource::Instance(name) => instance(name)?,
            src @ DemandSource::Literal { .. } => literal_demand(src),
            DemandSource::OpsCsv { path, init } => {
                if cfg.grid_steps != 21 {
                    bail!("demand calibration runs on the 21-step monthly grid");
                }
                calibrate_demand(&read_ops(path)?, &params, &instance(init)?, &budget(cfg))?.0
            }
        };
        demand.validate()?;
        Ok(Self { params, demand, grid, seed: cfg.seed })
    }

    fn nested(&self, cfg: &RunConfig) -> NestedMcConfig {
        NestedMcConfig {
            n_outer: cfg.n_outer,
            n_inner: cfg.n_inner,
            n_terminal: cfg.n_terminal,
            grid: self.grid,
            seed: self.seed,
        }
    }

    fn model(&self, cfg: &RunConfig) -> Result<HedgingModel> {
        Ok(HedgingModel::build(&self.params, &self.demand, &self.nested(cfg))?)
    }
}

fn target_value(target: Target, nv: &NvSolution) -> f64 {
    match target {
        Target::Amount(v) => v,
        Target::NvMax(f) => f * nv.profit,
    }
}

#[derive(Serialize)]
struct NvOutput {
    config_hash: String,
    seed: u64,
    solution: NvSolution,
    risk: f64,
    assumptions: AssumptionReport,
}

pub fn solve_nv(cfg: &RunConfig, hash: &str) -> Result<()> {
    let inp = Inputs::resolve(cfg)?;
    let dist = sample_market_size(&inp.params, &inp.demand, &inp.grid, cfg.n_terminal, inp.seed, Measure::Real)?;
    let nv = solve_newsvendor(&dist, &inp.demand)?;
    let risk = payoff_variance(&dist, &nv.decision(), &inp.demand)?.sqrt();
    let assumptions = check_assumptions(&dist, &inp.demand)?;
    println!("P {:.2}  R {:.2}  Q {:.2}  expected profit {} ({:.2})  risk {}", nv.p_nv, nv.r_nv, nv.q_nv, millions(nv.profit), nv.profit, millions(risk));
    println!(
        "assumptions: mean condition {}, tail condition {}",
        assumptions.mean_condition, assumptions.tail_condition
    );
    let out = cfg.output_dir.join("nv.json");
    write_json(&out, &NvOutput { config_hash: hash.into(), seed: inp.seed, solution: nv, risk, assumptions })?;
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl std::str::FromStr for MGrid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            bail!("m grid must look like a:b:n, got {s}");
        };
        let grid = MGrid {
            lo: lo.trim().parse().with_context(|| format!("bad grid start {lo}"))?,
            hi: hi.trim().parse().with_context(|| format!("bad grid end {hi}"))?,
            n: n.trim().parse().with_context(|| format!("bad grid size {n}"))?,
        };
        if grid.n == 0 || !(grid.lo > 0.0 && grid.hi >= grid.lo) || (grid.n == 1 && grid.hi != grid.lo) {
            bail!("m grid needs 0 < a <= b and n >= 1 (n = 1 only when a = b)");
        }
        Ok(grid)
    }
}

impl MGrid {
    pub fn values(&self, scale: f64) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                let t = if self.n == 1 { 0.0 } else { k as f64 / (self.n - 1) as f64 };
                scale * (self.lo + t * (self.hi - self.lo))
            })
            .collect()
    }
}

pub const FRONTIER_HEADER: [&str; 8] = ["m", "risk", "invest_risk_sq", "unhedge_risk_sq", "P", "R", "Q", "production_share"];

pub fn frontier(cfg: &RunConfig, hash: &str, hedge: bool, grid: MGrid, relative: bool) -> Result<PathBuf> {
    let inp = Inputs::resolve(cfg)?;
    let model = inp.model(cfg)?;
    let scale = if relative { solve_newsvendor(model.dist_real(), &inp.demand)?.profit } else { 1.0 };
    let ms = grid.values(scale);
    let mut csv = CsvOut::new(hash, inp.seed, &FRONTIER_HEADER)?;
    if hedge {
        for pt in efficient_frontier(&model, &ms)? {
            csv.row([
                num(pt.m),
                num(pt.risk),
                num(pt.breakdown.investment_sq),
                num(pt.breakdown.unhedgeable_sq),
                num(pt.p),
                num(pt.r),
                num(pt.q),
                num(pt.production_share),
            ])?;
        }
    } else {
        for pt in frontier_no_hedge(model.dist_real(), &inp.demand, &ms)? {
            let dec = risk_decomposition_no_hedge(model.engine(), &pt.decision)?;
            csv.row([
                num(pt.m),
                num(pt.risk),
                num(dec.financial_sq),
                num(dec.unhedgeable_sq),
                num(pt.decision.p),
                num(pt.decision.r),
                num(pt.q),
                num(1.0),
            ])?;
        }
    }
    let out = cfg.output_dir.join(if hedge { "frontier_hedge.csv" } else { "frontier_nohedge.csv" });
    csv.save(&out)?;
    println!("wrote {}", out.display());
    Ok(out)
}

#[derive(Serialize)]
struct OptimizeOutput {
    config_hash: String,
    seed: u64,
    m: f64,
    decision: Decision,
    q: f64,
    investment_sq: f64,
    unhedgeable_sq: f64,
    risk: f64,
    v0: f64,
    production_share: f64,
    no_hedge_risk: f64,
    price_markdown: f64,
    vpq_markdown: f64,
    risk_reduction: f64,
    dominance: DominanceReport,
    bounds: BoundsReport,
    bounds_hold: bool,
}

fn dominance_cfg(cfg: &RunConfig, inp: &Inputs) -> DominanceConfig {
    DominanceConfig { n: cfg.n_dominance, seed: inp.seed, grid: inp.grid, ..DominanceConfig::default() }
}

pub fn optimize(cfg: &RunConfig, hash: &str, target: Target) -> Result<()> {
    let inp = Inputs::resolve(cfg)?;
    let model = inp.model(cfg)?;
    let nv = solve_newsvendor(model.dist_real(), &inp.demand)?;
    let m = target_value(target, &nv);
    let opt = minimize_b(&model, m)?;
    let dominance = dominance_report(&inp.params, &inp.demand, &dominance_cfg(cfg, &inp))?;
    let bounds = bounds_report(&model, &nv, &opt, dominance.impact)?;
    let b = opt.evaluation.breakdown;
    let nv_risk = payoff_variance(model.dist_real(), &nv.decision(), &inp.demand)?.sqrt();
    let no_hedge_risk = match frontier_no_hedge(model.dist_real(), &inp.demand, &[m]) {
        Ok(pts) => pts[0].risk,
        Err(nvhedge::Error::Infeasible(_)) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    let out = OptimizeOutput {
        config_hash: hash.into(),
        seed: inp.seed,
        m,
        decision: opt.decision,
        q: opt.decision.quantity(&inp.demand),
        investment_sq: b.investment_sq,
        unhedgeable_sq: b.unhedgeable_sq,
        risk: b.risk(),
        v0: opt.evaluation.v0,
        production_share: opt.evaluation.v0 / m,
        no_hedge_risk,
        price_markdown: 1.0 - opt.decision.p / nv.p_nv,
        vpq_markdown: 1.0 - opt.decision.r / nv.r_nv,
        risk_reduction: 1.0 - b.risk() / no_hedge_risk,
        bounds_hold: bounds.all_hold(),
        dominance,
        bounds,
    };
    println!("{:<10} {:>12} {:>12} {:>12} {:>10} {:>10}", "model", "Q", "P", "R", "risk", "return");
    println!("{:<10} {:>12.0} {:>12.0} {:>12.0} {:>10} {:>10}", "NV", nv.q_nv, nv.p_nv, nv.r_nv, millions(nv_risk), millions(nv.profit));
    println!("{:<10} {:>12.0} {:>12.0} {:>12.0} {:>10} {:>10}", "hedging", out.q, opt.decision.p, opt.decision.r, millions(out.risk), millions(out.v0));
    println!(
        "price markdown {:.2}%, VPQ markdown {:.2}%, production share {:.2}%",
        100.0 * out.price_markdown,
        100.0 * out.vpq_markdown,
        100.0 * out.production_share
    );
    if no_hedge_risk.is_finite() {
        println!("risk reduction against the unhedged decision {:.2}%", 100.0 * out.risk_reduction);
    } else {
        println!("no unhedged decision reaches this target");
    }
    println!("impact {:?}; structural bounds hold: {}", out.dominance.impact, out.bounds_hold);
    let path = cfg.output_dir.join("optimize.json");
    write_json(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct HedgeSimOutput {
    config_hash: String,
    seed: u64,
    m: f64,
    decision: Decision,
    paths: usize,
    analytic_total: f64,
    analytic_investment_sq: f64,
    analytic_unhedgeable_sq: f64,
    decomposition: RiskDecomposition,
}

pub fn hedge_sim(cfg: &RunConfig, hash: &str, d: Decision, target: Target, paths: usize) -> Result<()> {
    let inp = Inputs::resolve(cfg)?;
    let model = inp.model(cfg)?;
    let m = match target {
        Target::Amount(v) => v,
        Target::NvMax(_) => target_value(target, &solve_newsvendor(model.dist_real(), &inp.demand)?),
    };
    let ens = simulate_strategy(&model, &d, m, paths, cfg.n_inner)?;
    let dec = decompose_risk(&ens);
    let mut csv = CsvOut::new(hash, inp.seed, &["path", "terminal_wealth", "payoff", "hedged_payoff", "investment_gain"])?;
    for (i, p) in ens.paths.iter().enumerate() {
        csv.row([i.to_string(), num(p.terminal_wealth()), num(p.payoff), num(p.hedged_payoff()), num(p.investment_gain())])?;
    }
    let csv_path = cfg.output_dir.join("hedge_sim.csv");
    csv.save(&csv_path)?;
    let a = ens.analytic.breakdown;
    println!("{:<24} {:>16} {:>12} {:>16}", "quantity", "simulated", "std_error", "analytic");
    println!("{:<24} {:>16.6e} {:>12.3e} {:>16.6e}", "mean terminal wealth", dec.mean_wealth.value, dec.mean_wealth.std_error, m);
    println!("{:<24} {:>16.6e} {:>12.3e} {:>16.6e}", "variance", dec.variance.value, dec.variance.std_error, a.total);
    println!("{:<24} {:>16.6e} {:>12.3e} {:>16.6e}", "investment risk^2", dec.investment_sq.value, dec.investment_sq.std_error, a.investment_sq);
    println!("{:<24} {:>16.6e} {:>12.3e} {:>16.6e}", "unhedgeable risk^2", dec.unhedgeable_sq.value, dec.unhedgeable_sq.std_error, a.unhedgeable_sq);
    println!("correlation of hedged payoff with the asset noise {:.4}", dec.hedged_asset_correlation);
    let json_path = cfg.output_dir.join("hedge_sim.json");
    write_json(
        &json_path,
        &HedgeSimOutput {
            config_hash: hash.into(),
            seed: inp.seed,
            m,
            decision: d,
            paths,
            analytic_total: a.total,
            analytic_investment_sq: a.investment_sq,
            analytic_unhedgeable_sq: a.unhedgeable_sq,
            decomposition: dec,
        },
    )?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

pub fn dominance(cfg: &RunConfig, hash: &str) -> Result<()> {
    let inp = Inputs::resolve(cfg)?;
    let rep = dominance_report(&inp.params, &inp.demand, &dominance_cfg(cfg, &inp))?;
    println!("impact {:?} at significance {}", rep.impact, rep.significance);
    println!("C_T greater than C_T^M: U = {:.1}, p = {:.3e}", rep.greater.u, rep.greater.p_value);
    println!("C_T less than C_T^M:    U = {:.1}, p = {:.3e}", rep.less.u, rep.less.p_value);
    let out = cfg.output_dir.join("dominance.json");
    write_json(&out, &serde_json::json!({ "config_hash": hash, "seed": inp.seed, "report": rep }))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Weekdays from `start` onwards.
fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// Daily price path from the configured asset parameters, as a price CSV.
pub fn simulate(cfg: &RunConfig, hash: &str, days: usize, start: NaiveDate, out: &Path) -> Result<()> {
    if days < 2 {
        bail!("need at least 2 days");
    }
    let params = match cfg.asset.as_ref() {
        Some(AssetSource::Literal { kappa, alpha, sigma }) => {
            let x0 = cfg.x0.ok_or_else(|| anyhow!("simulate needs x0"))?;
            EouParams::new(*kappa, *alpha, *sigma, x0, (days - 1) as f64 * DAILY)?
        }
        _ => bail!("simulate needs literal kappa, alpha and sigma"),
    };
    let grid = PathGrid::new(days - 1, DAILY)?;
    let flat = DemandParams { mu0: 0.0, mu1: 0.0, sigma_tilde: 0.0, b: 1.0, c: 1.0, s: 0.0 };
    let path = simulate_paths(&params, &flat, &grid, 1, cfg.seed, Measure::Real)?.remove(0);
    let mut csv = CsvOut::new(hash, cfg.seed, &["date", "price"])?;
    for (d, x) in trading_days(start, days).iter().zip(&path.x_path) {
        csv.row([d.format("%Y-%m-%d").to_string(), num(*x)])?;
    }
    csv.save(out)?;
    println!("wrote {} prices to {}", days, out.display());
    Ok(())
}
