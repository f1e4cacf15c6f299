//! `memrlab`: run sweeps, verify invariants, print the effective config.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use memrlab::experiment::{run, verify, ExperimentConfig, ExperimentKind, MethodKind, Overrides};

#[derive(Parser)]
#[command(name = "memrlab", version, about = "Epistemic uncertainty in Bayesian meta-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Precedence: built-in defaults < `--config` file < `MEMRLAB_WORKERS` <
/// flags.
#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "MEMRLAB_WORKERS")]
    workers: Option<usize>,
    /// sinusoid, logistic or calibration.
    #[arg(long, global = true)]
    experiment: Option<String>,
    /// Comma-separated subset of exact, lsbml, cmine.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated task counts.
    #[arg(long = "N", global = true, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Samples per task.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep and write the CSV.
    Run,
    /// Run the invariant suite and print a pass/fail table.
    Verify,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = Overrides {
            experiment: self.experiment.as_deref().map(str::parse::<ExperimentKind>).transpose()?,
            methods: self
                .methods
                .as_ref()
                .map(|v| v.iter().map(|s| s.trim().parse::<MethodKind>()).collect())
                .transpose()?,
            n_grid: self.n_grid.clone(),
            m: self.m,
            replicates: self.replicates,
            seed: self.seed,
            output_path: self.out.clone(),
            workers: self.workers,
        };
        overrides.apply(&mut config)?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<ExitCode> {
    let config = cli.common.load()?;
    match cli.command {
        Command::PrintConfig => {
            print!("{}", config.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run => {
            let outcome = run(&config).with_context(|| format!("writing {}", config.output_path.display()))?;
            eprintln!(
                "wrote {} rows to {} ({} failed cells)",
                outcome.rows.len(),
                config.output_path.display(),
                outcome.failures
            );
            Ok(if outcome.failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Verify => {
            let report = verify(&config);
            print!("{}", report.table());
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
