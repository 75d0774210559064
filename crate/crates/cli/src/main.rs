//! `cross`: run continual-learning experiments, report on results, list tasks.

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cross_core::runner::{cmd_list, cmd_report, cmd_run, RunOptions, RunnerError, OUTPUT_ROOT_VAR};

#[derive(Parser)]
#[command(name = "cross", version, about = "Kinematic continual reinforcement-learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate an experiment, one run per seed.
    Run {
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Results directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root under which experiments write their results.
        #[arg(long, env = OUTPUT_ROOT_VAR, default_value = "results")]
        output_root: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Write tables and curve data for the results under a directory.
    Report { dir: PathBuf },
    /// Print the tasks or tracks of a benchmark (hlr, llr, mlf, mpo).
    List { benchmark: String },
}

fn execute(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::Run { config, seed, out, output_root, quiet } => {
            let opts = RunOptions { seed, out, output_root: Some(output_root), quiet };
            let s = cmd_run(&config, &opts)?;
            let last = s.aggregate.cells.iter().map(|c| c.trained_upto).max().unwrap_or(0);
            let row: Vec<f64> =
                s.aggregate.cells.iter().filter(|c| c.trained_upto == last).map(|c| c.accuracy.mean).collect();
            let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
            println!(
                "{}: ran seeds {:?}, skipped {:?}; final mean accuracy {mean:.3}",
                s.out_dir.display(),
                s.executed,
                s.skipped
            );
        }
        Command::Report { dir } => {
            let s = cmd_report(&dir)?;
            for f in &s.files {
                println!("{}", f.display());
            }
        }
        Command::List { benchmark } => cmd_list(&benchmark, &mut io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
