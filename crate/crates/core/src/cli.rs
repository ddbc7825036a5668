//! Command-line front end: `run`, `sweep` and `fit`.
//!
//! Configuration precedence: built-in defaults < `--config` file <
//! `PRESIM_*` environment variables < command-line flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{fit, Model, DEFAULT_DECAY_RANGE};
use crate::engine::SimConfig;
use crate::experiment::{self, ExperimentPlan, RunOptions};
use crate::metrics::read_series;

pub const ENV_PREFIX: &str = "PRESIM_";

#[derive(Debug, Parser)]
#[command(name = "presim", version, about = "Distributed digital-preservation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its outputs.
    Run(RunArgs),
    /// Run a grid of simulations over one parameter and fit each.
    Sweep(SweepArgs),
    /// Fit a model to columns of a CSV file.
    Fit(FitArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cycles: Option<u64>,
    #[arg(long)]
    pub institutions: Option<usize>,
    #[arg(long, alias = "risk_threshold")]
    pub risk_threshold: Option<f64>,
    #[arg(long, alias = "suggest_threshold")]
    pub suggest_threshold: Option<f64>,
    #[arg(long, alias = "inform_threshold")]
    pub inform_threshold: Option<f64>,
    /// Mutation probability per institution per cycle, in percent.
    #[arg(long, alias = "mutation_probability", alias = "mutation-probability")]
    pub probability: Option<f64>,
    /// Disable migration time costs (every migration takes one cycle).
    #[arg(long, alias = "no_time_costs")]
    pub no_time_costs: bool,
    /// Any other configuration key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write every message to messages.log.
    #[arg(long, alias = "trace_messages")]
    pub trace_messages: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Configuration key to vary (e.g. probability, institutions).
    #[arg(long)]
    pub axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Runs per axis value (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    pub repetitions: u32,
    /// Decay-fit window as LO,HI.
    #[arg(long, value_parser = parse_range)]
    pub fit_range: Option<(f64, f64)>,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// sqrt-exp, linear or saturation.
    #[arg(long, value_parser = parse_model)]
    pub model: Model,
    /// Fit window on the x column as LO,HI.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(f64, f64)>,
    #[arg(long, default_value = "cycle")]
    pub x: String,
    #[arg(long, default_value = "migrations_freq")]
    pub y: String,
    /// Error column; `none` gives unit weights.
    #[arg(long, default_value = "freq_err")]
    pub sigma: String,
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo < hi) {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok((lo, hi))
}

impl ConfigArgs {
    /// Resolves the effective configuration from file, environment and flags.
    pub fn resolve<I>(&self, env: I) -> Result<SimConfig, crate::engine::ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::from_file(path)?,
            None => SimConfig::default(),
        };
        cfg.apply_env(ENV_PREFIX, env)?;
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| crate::engine::ConfigError::Parse(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(&k.trim().replace('-', "_"), v.trim())?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.cycles {
            cfg.cycles = v;
        }
        if let Some(v) = self.institutions {
            cfg.institutions = v;
        }
        if let Some(v) = self.risk_threshold {
            cfg.risk_threshold = v;
        }
        if let Some(v) = self.suggest_threshold {
            cfg.suggest_threshold = v;
        }
        if let Some(v) = self.inform_threshold {
            cfg.inform_threshold = v;
        }
        if let Some(v) = self.probability {
            cfg.mutation_probability = v;
        }
        if self.no_time_costs {
            cfg.time_costs = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn env_vars() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

/// Usage and configuration errors.
const EXIT_USAGE: u8 = 2;
/// Runtime failures.
const EXIT_FAILURE: u8 = 1;

pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    execute(cli)
}

pub fn execute(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.config.resolve(env_vars()) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let opts = RunOptions {
                out_dir: Some(args.out.clone()),
                trace_messages: args.trace_messages,
                rescan_every: None,
            };
            match experiment::run(&cfg, &opts) {
                Ok(out) => {
                    print!("{}", out.summary.to_text());
                    println!("outputs written to {}", args.out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => failure(e),
            }
        }
        Command::Sweep(args) => {
            let base = match args.config.resolve(env_vars()) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let plan = ExperimentPlan {
                base,
                sweep_axis: Some((args.axis.clone(), args.values.clone())),
                repetitions: args.repetitions,
                output_dir: args.out.clone(),
                fit_range: args.fit_range.unwrap_or(DEFAULT_DECAY_RANGE),
            };
            if let Err(e) = experiment::expand(&plan) {
                return usage(e);
            }
            match experiment::sweep(&plan) {
                Ok(out) => {
                    for row in &out.rows {
                        println!("{} = {}: c = {:.6} ± {:.6}", args.axis, row.value, row.c, row.sigma_c);
                    }
                    println!("aggregate written to {}", out.aggregate_path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => failure(e),
            }
        }
        Command::Fit(args) => {
            let sigma = (args.sigma != "none").then_some(args.sigma.as_str());
            let series = match read_series(&args.csv, &args.x, &args.y, sigma) {
                Ok(s) => s,
                Err(e) => return failure(e),
            };
            match fit(args.model, &series, args.range) {
                Ok(f) => {
                    print!("{}", f.report());
                    ExitCode::SUCCESS
                }
                Err(e) => failure(e),
            }
        }
    }
}

fn usage(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_USAGE)
}

fn failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_FAILURE)
}
