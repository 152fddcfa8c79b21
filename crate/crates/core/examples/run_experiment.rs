//! Runs an experiment config and prints its summary rows.
//!
//! Usage: `cargo run --example run_experiment -- configs/count_riverswim.toml [out_dir]`

use std::path::PathBuf;

use protorep::experiment::{read_summary, run_config};

fn main() -> protorep::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| "configs/count_riverswim.toml".into()));
    let out = args.next().map(PathBuf::from);
    let dir = run_config(&config, out.as_deref())?;
    for row in read_summary(&dir)?.iter().filter(|r| r.x == 0) {
        println!("{} {} {}: {:.3} (n = {})", row.method, row.cell, row.metric, row.mean, row.n);
    }
    println!("results in {}", dir.display());
    Ok(())
}
