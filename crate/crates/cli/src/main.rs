//! `agewatch` command-line tool.

mod analyze;
mod config;
mod detect;
mod error;
mod output;
mod plot;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use agewatch::detector::PolicyMode;
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Config;
use error::CliError;
use output::{parse_clock, Clock};

#[derive(Parser)]
#[command(name = "agewatch", version, about = "Detect container bloat aging and evaluate micro-rejuvenation")]
struct Cli {
    /// Use this RFC 3339 time for `generated_at` stamps instead of the wall clock.
    #[arg(long, global = true, value_name = "TIME", value_parser = parse_clock)]
    fixed_clock: Option<DateTime<Utc>>,

    /// Print nothing on success.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Config file (TOML); see config/agewatch.toml. Built-in defaults when absent.
    #[arg(long, value_name = "FILE", env = "AGEWATCH_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    WarnOnly,
    Immediate,
    Postpone,
}

impl From<PolicyArg> for PolicyMode {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::WarnOnly => PolicyMode::WarnOnly,
            PolicyArg::Immediate => PolicyMode::Immediate,
            PolicyArg::Postpone => PolicyMode::Postpone,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Select containers to rejuvenate from a series of heap snapshots.
    Analyze {
        /// Directory of snapshot files (*.json).
        #[arg(long, value_name = "DIR")]
        snapshots: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Minimum number of snapshots.
        #[arg(long, value_name = "N")]
        min_snapshots: Option<usize>,
        /// Critical element class; enables the black-list check. Repeatable.
        #[arg(long = "blacklist", value_name = "CLASS")]
        blacklist: Vec<String>,
    },
    /// Run aging detection over an indicator CSV.
    Detect {
        /// CSV with header timestamp_s,indicator,value.
        #[arg(long, value_name = "FILE")]
        indicators: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Samples per sliding window.
        #[arg(long, value_name = "N")]
        window: Option<usize>,
        /// Significance level of the trend test.
        #[arg(long)]
        alpha: Option<f64>,
        /// Seconds an indicator must keep degrading before it alerts.
        #[arg(long, value_name = "SECONDS")]
        min_persistence: Option<f64>,
        /// Rejuvenation policy applied to alarms.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Run the experiments of a simulation spec and compare them.
    Simulate {
        /// Experiment spec (TOML, or JSON by extension).
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Seed for every experiment; defaults to the spec's seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Skip the SVG charts.
        #[arg(long)]
        no_plots: bool,
    },
    /// Rebuild the comparison tables and charts from simulation run directories.
    Report {
        /// Directory holding one subdirectory per run, as written by `simulate`.
        #[arg(long, value_name = "DIR")]
        runs: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        no_plots: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let clock = Clock(cli.fixed_clock);
    let quiet = cli.quiet;
    match cli.command {
        Command::Analyze {
            snapshots,
            config,
            out,
            min_snapshots,
            blacklist,
        } => {
            let mut cfg = Config::load(config.config.as_deref())?;
            if let Some(n) = min_snapshots {
                cfg.candidacy.min_snapshots = n;
            }
            if !blacklist.is_empty() {
                cfg.candidacy.blacklist = Some(blacklist.into_iter().collect());
                cfg.candidacy.use_blacklist = true;
            }
            cfg.validate("command line")?;
            analyze::analyze(
                analyze::AnalyzeArgs {
                    snapshots: &snapshots,
                    config_path: config.config.as_deref(),
                    config: cfg,
                    out: &out,
                    quiet,
                },
                clock,
            )
        }
        Command::Detect {
            indicators,
            config,
            out,
            window,
            alpha,
            min_persistence,
            policy,
        } => {
            let mut cfg = Config::load(config.config.as_deref())?;
            let d = &mut cfg.detector;
            if let Some(w) = window {
                d.window = w;
            }
            if let Some(a) = alpha {
                d.alpha = a;
            }
            if let Some(p) = min_persistence {
                d.min_persistence_s = p;
            }
            if let Some(p) = policy {
                d.policy.mode = p.into();
            }
            cfg.validate("command line")?;
            detect::detect(
                detect::DetectArgs {
                    indicators: &indicators,
                    config_path: config.config.as_deref(),
                    config: cfg,
                    out: &out,
                    quiet,
                },
                clock,
            )
        }
        Command::Simulate {
            spec,
            seed,
            out,
            no_plots,
        } => simulate::simulate(
            simulate::SimulateArgs {
                spec: &spec,
                seed,
                out: &out,
                plots: !no_plots,
                quiet,
            },
            clock,
        ),
        Command::Report { runs, out, no_plots } => simulate::report(
            simulate::ReportArgs {
                runs: &runs,
                out: &out,
                plots: !no_plots,
                quiet,
            },
            clock,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agewatch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
