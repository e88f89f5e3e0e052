use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fafl::harness::{run_to_dir, ExperimentConfig, Status};

#[derive(Parser)]
#[command(name = "fafl", version, about = "Fluid-antenna over-the-air federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method × realization experiment and write its result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Parse and check a config, then print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the numeric cross-checks and print one line per check.
    OracleSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>, workers: Option<usize>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
        cfg.validate()?;
    }
    if workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    let dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .context("no output directory: pass --out or set output_dir")?;
    let start = Instant::now();
    let result = run_to_dir(&cfg, &dir, workers)?;
    for m in &result.summary.methods {
        let acc = m.final_accuracy.map_or("n/a".to_string(), |s| format!("{:.4} ± {:.4}", s.mean, s.std));
        let sel = m.selected_count.map_or("n/a".to_string(), |s| format!("{:.2} ± {:.2}", s.mean, s.std));
        println!("{:<11} {:?}  final accuracy {acc}  selected {sel}", m.method, m.status);
        for e in &m.errors {
            println!("    realization {}: {}", e.realization, e.message);
        }
    }
    println!("{} rows written to {} in {:.1?}", result.rows.len(), dir.display(), start.elapsed());
    let failed = result.summary.methods.iter().any(|m| m.status != Status::Ok);
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, seed, workers } => run(config, out, seed, workers),
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleSuite { seed } => {
            let checks = fafl::oracle::run_suite(seed)?;
            for c in &checks {
                println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} checks passed", checks.len());
            Ok(if passed == checks.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
