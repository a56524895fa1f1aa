use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ugel_core::harness::plan::ExperimentPlan;
use ugel_core::harness::report::{write_report, TableFormat};
use ugel_core::harness::runner::{run_plan, ResultsMatrix, RunOptions};
use ugel_core::synth::{Dataset, LabelDistribution};

#[derive(Parser)]
#[command(name = "ugel", version, about = "Uncertainty-guided active and semi-supervised regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic patch dataset.
    Gen {
        /// bimodal, negskew, uniform or gaussian
        #[arg(long)]
        dist: LabelDistribution,
        #[arg(long)]
        pool: usize,
        #[arg(long)]
        test: usize,
        /// Patch side length in pixels.
        #[arg(long, default_value_t = 16)]
        patch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every method and seed of a plan.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Skip cells already finished in OUT.
        #[arg(long)]
        resume: bool,
    },
    /// Write curve, summary, p-value and pass-count tables for a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Rounds at which methods are compared; defaults to the plan's.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the numerics against quadrature, finite differences and exact enumeration.
    Verify,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Gen {
            dist,
            pool,
            test,
            patch,
            seed,
            out,
        } => {
            let d = Dataset::generate(dist, pool, test, patch, seed)?;
            d.save(&out)?;
            println!("wrote {} ({} pool, {} test, {}x{} patches)", out.display(), pool, test, patch, patch);
            Ok(true)
        }
        Command::Run {
            config,
            out,
            workers,
            resume,
        } => {
            let plan = ExperimentPlan::load(&config).with_context(|| format!("reading plan {}", config.display()))?;
            let dataset = plan.dataset.load().context("loading dataset")?;
            let opts = RunOptions {
                workers,
                resume,
                verbose: true,
            };
            let matrix = run_plan(&plan, &dataset, &out, &opts)?;
            let checkpoints = plan.checkpoints.clone();
            write_report(&matrix, &out, &checkpoints, TableFormat::Csv)?;
            let failed = matrix.failures();
            for c in &failed {
                eprintln!("failed: {} seed {}", c.method, c.seed);
            }
            Ok(failed.is_empty())
        }
        Command::Report {
            input,
            checkpoints,
            format,
            out,
        } => {
            let matrix = ResultsMatrix::load(&input)?;
            if !matrix.is_complete() {
                eprintln!("warning: {} has unfinished cells", input.display());
            }
            let checkpoints = checkpoints.unwrap_or_else(|| matrix.plan.checkpoints.clone());
            for p in write_report(&matrix, out.as_ref().unwrap_or(&input), &checkpoints, format)? {
                println!("{}", p.display());
            }
            Ok(matrix.failures().is_empty())
        }
        Command::Verify => {
            let checks = ugel_core::verify::all();
            for c in &checks {
                println!(
                    "{} {:<20} {:<34} error {:.2e} (tol {:.0e})",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.error,
                    c.tolerance
                );
            }
            if checks.is_empty() {
                bail!("no checks ran");
            }
            Ok(checks.iter().all(|c| c.passed()))
        }
    }
}
