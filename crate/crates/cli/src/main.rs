use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rflow_cli::commands::{
    cmd_derivative, cmd_scan, cmd_simulate, describe_derivative, describe_path, describe_scan,
};
use rflow_cli::config::{ExperimentConfig, MethodChoice, Overrides};
use rflow_cli::error::{CliError, Result};
use rflow_cli::verify::{check_count, run_all, run_check, Level};

#[derive(Parser)]
#[command(
    name = "rflow",
    version,
    about = "Reflected SDE flows and their derivatives"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self, method: Option<MethodChoice>) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig::load(&self.config)?.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            dt: self.dt,
            t_end: self.t_end,
            method,
            workers: self.workers,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate reflected paths and write them as CSV.
    Simulate(Common),
    /// Compute the derivative in the initial point.
    Derivative {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<MethodChoice>,
    },
    /// Scan the planar example for discontinuities in the first coordinate.
    Scan(Common),
    /// Run the acceptance checks.
    Verify {
        #[arg(long, value_enum, default_value = "full")]
        level: Level,
        /// Run only the check with this number.
        #[arg(long)]
        check: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            for r in cmd_simulate(&common.load(None)?)? {
                println!("{}", describe_path(&r));
            }
        }
        Command::Derivative { common, method } => {
            let cfg = common.load(method)?;
            let records = cmd_derivative(&cfg)?;
            for r in &records {
                println!("{}", describe_derivative(r));
            }
        }
        Command::Scan(common) => {
            let summary = cmd_scan(&common.load(None)?)?;
            for line in describe_scan(&summary) {
                println!("{line}");
            }
        }
        Command::Verify { level, check } => {
            let results = match check {
                Some(id) if (1..=check_count()).contains(&id) => {
                    let r = run_check(id, level);
                    println!("{}", r.line());
                    vec![r]
                }
                Some(id) => {
                    return Err(CliError::Config(format!(
                        "no check {id}; checks are numbered 1..={}",
                        check_count()
                    )))
                }
                None => run_all(level, |r| println!("{}", r.line())),
            };
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed {
                    failed,
                    total: results.len(),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
