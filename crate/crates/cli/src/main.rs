//! Command-line harness around the simulation library: run seeded sweeps,
//! summarize result files, and emit long-format plot data.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use relaybeam::sim;

#[derive(Parser)]
#[command(name = "relaybeam", version, about = "Multi-hop hybrid transceiver simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo sweep described by a TOML config.
    Run {
        /// Experiment config file.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Output CSV path (falls back to the config's `output.path`,
        /// then to `results.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run trials on one thread instead of in parallel.
        #[arg(long)]
        serial: bool,
        /// Append the wall-time column (excluded from the determinism
        /// contract).
        #[arg(long)]
        timing: bool,
    },
    /// Per-(algorithm, grid point) means and 95% confidence half-widths.
    Summarize {
        /// Results CSV produced by `run`.
        results: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long-format plot data, sorted by x then algorithm.
    Plotdata {
        /// Results CSV produced by `run`.
        results: PathBuf,
        /// Sweep axis: `snr` (spectral efficiency) or `sigma_e` (sum-MSE).
        #[arg(long)]
        axis: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run_cli() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run_cli() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, trials, out, serial, timing } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let mut cfg = sim::ExperimentConfig::from_toml_str(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if serial {
                cfg.parallel = false;
            }
            cfg.validate()?;
            let result = sim::run(&cfg)?;
            let path = out
                .or_else(|| cfg.output_path.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            fs::write(&path, result.to_csv(timing))
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
            Ok(())
        }
        Command::Summarize { results, out } => {
            let rows = read_rows(&results)?;
            let csv = sim::summary_to_csv(&sim::summarize(&rows));
            write_or_print(out, &csv)
        }
        Command::Plotdata { results, axis, out } => {
            let rows = read_rows(&results)?;
            let axis: sim::Axis = axis.parse()?;
            let csv = sim::emit_plot_data(&rows, axis)?;
            write_or_print(out, &csv)
        }
    }
}

fn read_rows(path: &PathBuf) -> Result<Vec<sim::ResultRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sim::parse_results_csv(&text)?)
}

fn write_or_print(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
