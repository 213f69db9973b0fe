mod commands;
mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use nvhedge::newsvendor::Decision;

use commands::MGrid;
use config::{RunConfig, Target};

/// Newsvendor pricing and production with a financial hedge.
#[derive(Parser)]
#[command(name = "nvhedge", version)]
struct Cli {
    /// Run configuration (key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Size of the worker thread pool. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hedge,
    Nohedge,
}

#[derive(Subcommand)]
enum Command {
    /// Fit asset parameters to a daily price history.
    CalibrateAsset {
        #[arg(long)]
        prices: PathBuf,
        /// Observation spacing in years.
        #[arg(long, default_value_t = commands::DAILY)]
        dt: f64,
        #[arg(long, default_value = "asset.json")]
        out: PathBuf,
    },
    /// Fit demand parameters to monthly sales and prices.
    CalibrateDemand {
        #[arg(long)]
        ops: PathBuf,
        /// Asset file written by calibrate-asset.
        #[arg(long)]
        asset: PathBuf,
    },
    /// Classical newsvendor solution.
    SolveNv,
    /// Mean-variance frontier over a grid of target returns.
    Frontier {
        #[arg(long, value_enum, default_value = "hedge")]
        mode: Mode,
        /// Targets as start:end:count.
        #[arg(long)]
        m_grid: MGrid,
        /// Read the grid as multiples of the newsvendor expected profit.
        #[arg(long)]
        relative: bool,
    },
    /// Minimum-variance decision for one target return.
    Optimize {
        /// Target as an amount, `nvmax` or `<factor>*nvmax`; overrides the config.
        #[arg(long)]
        m: Option<Target>,
    },
    /// Simulate the hedged strategy for a fixed decision.
    HedgeSim {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        m: Option<Target>,
        #[arg(long, default_value_t = 2000)]
        paths: usize,
    },
    /// Rank test for the impact of the asset trend on demand.
    DominanceTest,
    /// Write a synthetic daily price history.
    Simulate {
        #[arg(long)]
        days: usize,
        #[arg(long, default_value = "2010-01-04")]
        start: NaiveDate,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CalibrateAsset { .. } => "calibrate-asset",
            Command::CalibrateDemand { .. } => "calibrate-demand",
            Command::SolveNv => "solve-nv",
            Command::Frontier { .. } => "frontier",
            Command::Optimize { .. } => "optimize",
            Command::HedgeSim { .. } => "hedge-sim",
            Command::DominanceTest => "dominance-test",
            Command::Simulate { .. } => "simulate",
        }
    }
}

fn load(path: Option<&Path>) -> Result<RunConfig> {
    RunConfig::load(path.ok_or_else(|| anyhow!("this command needs --config"))?)
}

fn target(cli: Option<Target>, cfg: &RunConfig) -> Result<Target> {
    cli.or(cfg.m).ok_or_else(|| anyhow!("no target return: pass --m or set m in the config"))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot start thread pool")?;
    }
    let name = cli.command.name();
    if let Command::CalibrateAsset { prices, dt, out } = &cli.command {
        return commands::calibrate_asset(prices, *dt, out);
    }
    let cfg = load(cli.config.as_deref())?;
    let hash = cfg.hash_with(name);
    match cli.command {
        Command::CalibrateAsset { .. } => unreachable!(),
        Command::CalibrateDemand { ops, asset } => commands::calibrate_demand_cmd(&cfg, &ops, &asset),
        Command::SolveNv => commands::solve_nv(&cfg, &hash),
        Command::Frontier { mode, m_grid, relative } => {
            commands::frontier(&cfg, &hash, matches!(mode, Mode::Hedge), m_grid, relative).map(|_| ())
        }
        Command::Optimize { m } => commands::optimize(&cfg, &hash, target(m, &cfg)?),
        Command::HedgeSim { p, r, m, paths } => {
            commands::hedge_sim(&cfg, &hash, Decision { p, r }, target(m, &cfg)?, paths)
        }
        Command::DominanceTest => commands::dominance(&cfg, &hash),
        Command::Simulate { days, start, out } => commands::simulate(&cfg, &hash, days, start, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    use nvhedge::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::AssumptionViolated(_) | E::NotMeanReverting { .. } | E::NotApplicable(_)) => (3, "assumption"),
        Some(E::Numerical(_) | E::Consistency(_)) => (4, "numerical"),
        _ => (2, "validation"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let line = serde_json::json!({ "error": kind, "message": format!("{err:#}"), "exit_code": code });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}
