//! `riskcharge` command line: solve, verify, simulate, pipeline and price-check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "riskcharge", version, about = "Risk-averse EV charging: solver and experiment harness")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Experiment config file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: paper_case_study or desk_scale.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed; overrides [simulation] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides [output] dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the MDP for each (lambda, alpha) and write thresholds and time-0 values.
    Solve {
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Check the structural properties over a grid of risk parameters.
    Verify {
        /// `l1,l2,.../a1,a2,...`; defaults to the config's verify grid.
        #[arg(long)]
        beta_grid: Option<String>,
    },
    /// Estimate practical reward and risk of one policy by Monte Carlo.
    Simulate {
        #[arg(long, value_enum, default_value_t = PolicyKind::Threshold)]
        policy: PolicyKind,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_paths: Option<usize>,
        /// Also write every simulated path to trajectories.csv.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Sample, fit and select risk parameters; write the selection table.
    Pipeline,
    /// Write the price grid and noise laws and compare the chain with simulated paths.
    PriceCheck {
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    /// Basestock thresholds of the solved MDP family.
    Threshold,
    /// Charge as fast as possible.
    Default,
    /// Never charge.
    Never,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Structure(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Structure(_) => 3,
        }
    }
}

fn load_config(g: &GlobalArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => anyhow::bail!("one of --config or --preset is required"),
    };
    if let Some(seed) = g.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let cfg = load_config(&cli.global).map_err(Failure::Config)?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Failure::Runtime(e.into()))?;
    match cli.command {
        Command::Solve { lambda, alpha, horizon } => commands::solve(&cfg, lambda, alpha, horizon),
        Command::Verify { beta_grid } => commands::verify(&cfg, beta_grid.as_deref()),
        Command::Simulate {
            policy,
            lambda,
            alpha,
            n_paths,
            dump_trajectories,
        } => commands::simulate(&cfg, policy, lambda, alpha, n_paths, dump_trajectories),
        Command::Pipeline => commands::pipeline(&cfg),
        Command::PriceCheck { paths, horizon } => commands::price_check(&cfg, paths, horizon),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Structure(msg) => eprintln!("structure check failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
