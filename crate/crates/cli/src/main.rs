use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dproj_cli::commands::{self, RunArgs};
use dproj_cli::CliError;
use dproj_core::verify::Level;

/// Delayed-projection solvers for linearly constrained finite sums.
#[derive(Parser, Debug)]
#[command(name = "dproj", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the configured problem and write a snapshot.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Snapshot path; defaults to `<output_dir>/problem.dproj`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured sweep and write traces and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Added to every entry seed; repetition r uses offset + r.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Target suboptimality for the comparison table.
        #[arg(long)]
        eps: Option<f64>,
        /// Maximum number of concurrent runs.
        #[arg(long, env = "DP_THREADS")]
        threads: Option<usize>,
    },
    /// Run the built-in verification suites.
    Verify {
        #[arg(long, default_value = "quick")]
        level: Level,
    },
    /// Recompute the comparison table from trace CSVs.
    Compare {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Also write the rows as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out } => {
            let path = commands::generate(&config, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Run { config, out, seed_offset, eps, threads } => {
            let args = RunArgs { config: &config, out: out.as_deref(), seed_offset, eps, threads };
            let summary = commands::run(&args)?;
            let rows: Vec<_> = summary.entries.iter().filter_map(|e| e.comparison.clone()).collect();
            print!("{}", commands::format_table(&rows));
            for e in summary.failed() {
                eprintln!("run {} failed: {}", e.run_id, e.error.as_deref().unwrap_or("unknown error"));
            }
        }
        Command::Verify { level } => {
            let outcomes = commands::verify(level);
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed));
            }
        }
        Command::Compare { csv, eps, out } => {
            let rows = commands::compare(&csv, eps)?;
            print!("{}", commands::format_table(&rows));
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&rows).map_err(|e| CliError::Runtime(e.into()))?;
                std::fs::write(&path, text).map_err(|e| CliError::Runtime(e.into()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
