//! `cfsim`: generate populations, simulate photographs, run identification
//! experiments and render their reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use cfsim::LandmarkSet;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cfsim", version, about = "Craniofacial superimposition simulation experiments")]
pub struct Cli {
    /// Run seed. Overrides the seed of a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the overlay matrix. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic population and write it as CSV plus metadata.
    Generate(GenerateArgs),
    /// Render the photo galleries of every condition in a config.
    Simulate(ConfigArgs),
    /// Run every condition in a config: matrices, reports and a table.
    Run(ConfigArgs),
    /// Tables, CMC curves and an accuracy chart from report files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of subjects.
    #[arg(long, required_unless_present = "from_manifest")]
    pub subjects: Option<usize>,

    /// Landmark set (set_a or set_b).
    #[arg(long, default_value = "set_a", value_parser = parse_set)]
    pub set: LandmarkSet,

    /// Output file name inside the output directory.
    #[arg(long, default_value = "population.csv")]
    pub name: String,

    /// Repeat the run recorded in a manifest.
    #[arg(long, conflicts_with = "subjects")]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long, required_unless_present = "from_manifest")]
    pub config: Option<PathBuf>,

    /// Repeat the run recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files or `run.manifest.json` files.
    #[arg(required_unless_present = "from_manifest")]
    pub inputs: Vec<PathBuf>,

    /// Repeat the run recorded in a manifest.
    #[arg(long, conflicts_with = "inputs")]
    pub from_manifest: Option<PathBuf>,
}

fn parse_set(s: &str) -> Result<LandmarkSet, String> {
    s.parse().map_err(|e: cfsim::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
