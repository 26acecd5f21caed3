use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablim_cli::report::REPORT_FILE;
use stablim_cli::{CliError, CliResult, ExperimentConfig, ExperimentKind, RunReport};

#[derive(Parser)]
#[command(name = "stablim", version, about = "Seeded Monte Carlo experiments for stable limits of explosive processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the worker count in the configuration.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for report.json and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw from a limit law and compare its ECF with the closed-form CF.
    SampleLaw(RunArgs),
    /// Sample the truncated limit series.
    Series(RunArgs),
    /// Exceedance and log-moment diagnostics for the series terms.
    Lemma(RunArgs),
    /// Simulate an explosive process.
    Simulate(RunArgs),
    /// Mixing-convergence statistic at a checkpoint.
    VerifyMixing(RunArgs),
    /// Stable-convergence statistic at a checkpoint.
    VerifyStable(RunArgs),
    /// Monte Carlo checks of the normalizing-sequence conditions.
    Conditions(RunArgs),
    /// Re-run a stored report and compare every statistic bit for bit.
    Replay {
        /// Report file, or a directory containing report.json.
        report: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn execute(cli: Cli) -> CliResult<RunReport> {
    let (kind, args) = match cli.command {
        Command::Replay { report, common } => {
            let path = if report.is_dir() { report.join(REPORT_FILE) } else { report };
            let stored = RunReport::load(&path)?;
            let fresh = stablim_cli::replay(&stored, common.workers, common.seed, common.out.as_deref())?;
            eprintln!("replay: {} statistics identical", fresh.statistics.len());
            return Ok(fresh);
        }
        Command::SampleLaw(a) => (ExperimentKind::SampleLaw, a),
        Command::Series(a) => (ExperimentKind::Series, a),
        Command::Lemma(a) => (ExperimentKind::Lemma, a),
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::VerifyMixing(a) => (ExperimentKind::VerifyMixing, a),
        Command::VerifyStable(a) => (ExperimentKind::VerifyStable, a),
        Command::Conditions(a) => (ExperimentKind::Conditions, a),
    };
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.kind() != kind {
        return Err(CliError::config(
            "experiment.kind",
            format!("config describes {}, but the subcommand is {kind}", config.kind()),
        ));
    }
    if let Some(seed) = args.common.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.common.workers {
        config.workers = workers;
    }
    let out = args.common.out.or_else(|| config.output.clone());
    stablim_cli::run(&config, out.as_deref())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(report) => {
            for v in &report.verdicts {
                println!(
                    "{} {}: {:e} ({:?} {:e})",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.statistic,
                    v.rule,
                    v.threshold
                );
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
