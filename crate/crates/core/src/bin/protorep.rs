use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use protorep::experiment::{self, WORKERS_ENV};
use protorep::Error;

#[derive(Parser)]
#[command(name = "protorep", version, about = "Proto-representation experiments")]
#[command(after_help = format!("Set {WORKERS_ENV} to choose the number of worker threads."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid cell of a config with its seeds.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-phase hyperparameter sweep.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute summary.csv from the raw files of a result directory.
    Summarize { dir: PathBuf },
    /// Heatmap of the top eigenvector of a stored representation.
    Heatmap {
        repr: PathBuf,
        /// Environment name or map file.
        map: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Error> = match cli.command {
        Command::Run { config, out } => experiment::run_config(&config, out.as_deref()).map(|dir| {
            println!("{}", dir.display());
        }),
        Command::Sweep { config, out } => experiment::sweep(&config, out.as_deref()).map(|(dir, report)| {
            for b in &report.best {
                println!("{}: cell {} score {:.4} {}", b.method, b.cell, b.summary.mean, b.params);
            }
            println!("{}", dir.display());
        }),
        Command::Summarize { dir } => experiment::summarize_dir(&dir).map(|rows| {
            println!("{} summary rows", rows.len());
        }),
        Command::Heatmap { repr, map } => experiment::heatmap_from_files(&repr, &map).map(|(csv, svg)| {
            println!("{}\n{}", csv.display(), svg.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
