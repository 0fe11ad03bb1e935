use std::path::PathBuf;
use std::process::ExitCode;

use branchopt::driver::{alternate_descent, Problem};
use branchopt::fieldsio::write_outputs;
use branchopt::{ConstraintSystem, DofLayout, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "branchopt", version, about = "Compliance-optimal shapes on branching periodic decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating descent and write result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the outer iteration cap.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Overrides the stopping tolerance on the density change.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        warm_start: bool,
    },
    /// Check the decomposition and load compatibility only.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> branchopt::Result<bool> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let (decomp, loads, opt) = cfg.resolve()?;
            let layout = DofLayout::build(&decomp, opt.n)?;
            let sys = ConstraintSystem::assemble(&layout, &decomp, &loads)?;
            println!(
                "ok: {} subdomains, {} reference classes, {} unknowns, {} rows",
                decomp.len(),
                layout.classes.len(),
                layout.n_dofs(),
                sys.n_rows()
            );
            Ok(true)
        }
        Command::Run { config, out, max_iters, tol, warm_start } => {
            let cfg = RunConfig::from_file(&config)?;
            let (decomp, loads, mut opt) = cfg.resolve()?;
            if let Some(k) = max_iters {
                opt.outer_max_iters = k;
            }
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(branchopt::Error::Config("--tol must be positive".into()));
                }
                opt.stop_tol = t;
            }
            opt.warm_start |= warm_start;
            let mut problem = Problem::from_config(decomp, loads.clone(), &opt)?;
            let report = alternate_descent(&mut problem, &opt, None)?;
            let echo = serde_json::json!({
                "config_file": config.display().to_string(),
                "decomposition": problem.decomp.spec(),
                "loads": loads,
                "optimization": opt,
            });
            write_outputs(&out, &problem, &report, echo)?;
            let o = report.final_objective();
            println!(
                "{} after {} iterations: J = {:.10e} (E {:.6e}, V {:.6e}, L {:.6e})",
                if report.converged { "converged" } else { "stopped" },
                report.iterations(),
                o.total,
                o.elastic,
                o.volume,
                o.perimeter
            );
            Ok(report.converged)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
