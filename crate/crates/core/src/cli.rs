//! Command-line front end: `run`, `sweep` and `validate`.
//!
//! Exit codes: 0 on success, 1 for configuration or plan errors, 2 for
//! runtime failures (I/O, training, failed sweep runs) and usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::domain::{AdaptationMode, Behavior, EffortMode, SimulationConfig};
use crate::engine::{self, RunOptions};
use crate::error::Error;
use crate::harness::{self, SweepPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Lists every config key with its default, for `--help`.
pub fn config_help() -> String {
    let d = SimulationConfig::default();
    let fields = [
        ("p", d.p.to_string(), "initial population size"),
        ("k", d.k.to_string(), "favorable outcomes per step"),
        ("n_new", d.n_new.to_string(), "new agents per step"),
        ("t", d.steps.to_string(), "number of steps"),
        ("g", d.g.to_string(), "global ease of acting on recourse, in [0,1]"),
        ("adaptation_mode", d.adaptation_mode.to_string(), "binary | continuous"),
        ("effort_mode", d.effort_mode.to_string(), "constant | flexible"),
        ("sigma_gamma", d.sigma_gamma.to_string(), "sd of the continuous step factor"),
        ("lambda_flex", d.lambda_flex.to_string(), "flexible-effort scale"),
        ("feature_dim", d.feature_dim.to_string(), "feature dimension"),
        ("feature_mean", d.feature_mean.to_string(), "mean of each feature"),
        ("feature_sd", d.feature_sd.to_string(), "sd of each feature"),
        ("label_prob", d.label_prob.to_string(), "Bernoulli parameter of training labels"),
        ("master_seed", d.master_seed.to_string(), "64-bit master seed"),
    ];
    let mut out = String::from("Config file keys (JSON object; missing keys take these defaults):\n");
    for (key, default, what) in fields {
        out.push_str(&format!("  {key:<16} {default:<20} {what}\n"));
    }
    out.push_str(&format!(
        "\nSweep grid defaults: behaviors {:?}, g {:?}, n_new {:?}, {} seeds.\n",
        Behavior::REPORTED.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
        harness::DEFAULT_G_GRID,
        harness::DEFAULT_N_NEW_GRID,
        harness::DEFAULT_SEEDS,
    ));
    out
}

#[derive(Debug, Parser)]
#[command(name = "recourse-sim", version, about = "Algorithmic recourse under a moving top-k threshold")]
#[command(after_help = config_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its trace and manifest.
    #[command(after_help = config_help())]
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory (created if absent).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the behavior × g × n_new × seed grid and write aggregates.
    #[command(after_help = config_help())]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config file and print every violation.
    #[command(after_help = config_help())]
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Master seed (base seed for sweeps).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Global ease of recourse; restricts a sweep to this single value.
    #[arg(long)]
    pub g: Option<f64>,
    /// New agents per step; restricts a sweep to this single value.
    #[arg(long = "n-new")]
    pub n_new: Option<usize>,
    /// binary | continuous
    #[arg(long)]
    pub adaptation: Option<AdaptationMode>,
    /// constant | flexible
    #[arg(long)]
    pub effort: Option<EffortMode>,
    /// Number of steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: SimulationConfig) -> SimulationConfig {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(g) = self.g {
            cfg.g = g;
        }
        if let Some(n) = self.n_new {
            cfg.n_new = n;
        }
        if let Some(a) = self.adaptation {
            cfg.adaptation_mode = a;
        }
        if let Some(e) = self.effort {
            cfg.effort_mode = e;
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        cfg
    }

    /// The default grid narrowed by whichever overrides were given.
    pub fn sweep_plan(&self, base: SimulationConfig) -> SweepPlan {
        let base = SimulationConfig {
            steps: self.steps.unwrap_or(base.steps),
            master_seed: self.seed.unwrap_or(base.master_seed),
            ..base
        };
        let mut plan = SweepPlan::from_base(base);
        if let Some(g) = self.g {
            plan.g_grid = vec![g];
        }
        if let Some(n) = self.n_new {
            plan.n_new_grid = vec![n];
        }
        plan.behaviors = match (self.adaptation, self.effort) {
            (Some(adaptation), Some(effort)) => vec![Behavior { adaptation, effort }],
            (Some(a), None) => Behavior::REPORTED.into_iter().filter(|b| b.adaptation == a).collect(),
            (None, Some(e)) => Behavior::REPORTED.into_iter().filter(|b| b.effort == e).collect(),
            (None, None) => Behavior::REPORTED.to_vec(),
        };
        plan
    }
}

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, Error> {
    match path {
        Some(p) => SimulationConfig::load(p),
        None => Ok(SimulationConfig::default()),
    }
}

fn report(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(list) => {
            eprintln!("invalid configuration:");
            for e in list {
                eprintln!("  - {e}");
            }
            EXIT_INVALID
        }
        Error::InvalidPlan(msg) => {
            eprintln!("invalid sweep plan: {msg}");
            EXIT_INVALID
        }
        Error::Json { .. } => {
            eprintln!("unreadable config: {err}");
            EXIT_INVALID
        }
        Error::Io { .. } => {
            eprintln!("i/o error: {err}");
            EXIT_RUNTIME
        }
        other => {
            eprintln!("error: {other}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = common.overrides.apply(load_config(common.config.as_deref())?);
            cfg.validate().map_err(Error::InvalidConfig)?;
            println!("configuration is valid");
            Ok(EXIT_OK)
        }
        Command::Run { common, out } => {
            let cfg = common
                .overrides
                .apply(load_config(common.config.as_deref())?)
                .validate()
                .map_err(Error::InvalidConfig)?;
            let output = engine::run_with(&cfg, &RunOptions::default_snapshots(cfg.steps))?;
            output.write_to(&out)?;
            println!("wrote {} steps to {}", output.records.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Sweep { common, out, workers } => {
            let base = load_config(common.config.as_deref())?;
            let plan = common.overrides.sweep_plan(base);
            plan.validate()?;
            let result = harness::run_sweep(&plan, workers.unwrap_or(0))?;
            harness::write_outputs(&result, &out)?;
            let failed = result.failures().count();
            for (spec, e) in result.failures() {
                eprintln!("run {} failed: {e}", spec.trace_file_name());
            }
            println!(
                "wrote {} aggregate rows from {} runs to {}",
                result.aggregate.len(),
                result.runs.len() - failed,
                out.display()
            );
            Ok(if failed > 0 { EXIT_RUNTIME } else { EXIT_OK })
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_RUNTIME } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}
