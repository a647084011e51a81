use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drts::harness::output::{emit_run, emit_sweep};
use drts::harness::validate::{run_validation, write_validation};
use drts::harness::{run_experiment, run_sweep, Overrides, RunConfig};
use drts::par::Execution;
use drts::Result;

/// Doubly robust Thompson sampling experiments.
#[derive(Debug, Parser)]
#[command(name = "drts", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// TOML configuration or a manifest from an earlier run.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one policy configuration.
    Run(Common),
    /// Run the hyperparameter grid and keep the best cell per policy.
    Sweep(Common),
    /// Run the oracle suite; exits with 3 when a check fails.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/validate")]
        output_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Reproduce the regret and estimation-error panels with the best
    /// hyperparameters per policy (N=20, d=30 unless overridden).
    Figure {
        #[command(flatten)]
        common: Common,
        /// Horizon 20000 instead of the desk-scale 2000 (hours on one core).
        #[arg(long)]
        full_scale: bool,
    },
}

fn load(common: &Common, base: RunConfig) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => base,
    };
    config.apply(&common.overrides);
    config.validate()?;
    Ok(config)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let config = load(&common, RunConfig::default())?;
            let result = run_experiment(&config)?;
            let (mean, sd) = result.final_regret();
            println!(
                "{} T={} reps={}: final cumulative regret {mean} (sd {sd})",
                config.policy, config.horizon, config.reps
            );
            report(&emit_run(&config.output_dir, &result)?);
        }
        Command::Sweep(common) => {
            let config = load(&common, RunConfig::default())?;
            sweep(&config, "sweep")?;
        }
        Command::Figure { common, full_scale } => {
            let mut base = RunConfig::default();
            base.env.n_arms = 20;
            base.env.dim = 30;
            base.output_dir = PathBuf::from("out/figure");
            let mut config = load(&common, base)?;
            if full_scale {
                config.horizon = 20_000;
            }
            sweep(&config, "figure")?;
        }
        Command::Validate { seed, output_dir, workers } => {
            let rows = run_validation(seed, Execution::from_workers(workers))?;
            let mut failed = 0;
            for (name, r) in &rows {
                let verdict = if r.pass { "pass" } else { "FAIL" };
                println!("{verdict} {name} @ {}: {:?} (bound {:?})", r.checkpoint, r.statistic, r.bound);
                failed += usize::from(!r.pass);
            }
            println!("wrote {}", write_validation(&output_dir, &rows)?.display());
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(config: &RunConfig, command: &str) -> Result<()> {
    let result = run_sweep(config)?;
    for best in result.best() {
        let (mean, sd) = best.final_regret();
        println!(
            "best {}: v={} gamma={} final cumulative regret {mean} (sd {sd})",
            best.config.policy, best.resolved.v, best.resolved.gamma
        );
    }
    report(&emit_sweep(&config.output_dir, command, config, &result)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
