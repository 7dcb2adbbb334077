//! `vaereg`: generate data, train, cross-validate, and interpret regression VAEs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "vaereg", version, about = "Variational autoencoder regression experiments")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset from the generative model and write it as CSV
    GenData {
        /// Also write the hidden latent ground truth
        #[arg(long)]
        with_truth: bool,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a model on a CSV dataset and save a checkpoint
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict targets (mean and std) for every row of a CSV file
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// K-fold cross-validation of the model and baselines
    Cv {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated subset of vae,nn,linear,ridge,knn,mean
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Decode latent points along the target direction over a grid of targets
    Traverse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Project latent means of a dataset onto two principal components
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
