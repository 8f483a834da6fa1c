mod commands;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dyadsync", version, about = "Facial synchrony features and trust prediction for dyadic video")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Enet,
    #[value(alias = "forest")]
    Rf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ControlMode {
    Pairs,
    Time,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Dyad,
    Subject,
}

#[derive(Subcommand)]
pub enum Command {
    /// Quality gate, smoothing, optional imputation and sparse reconstruction.
    Preprocess {
        /// Session manifest (`session_id, h_csv, t_csv, trust_amount`).
        #[arg(long)]
        manifest: PathBuf,
        /// Skip the [0, 5] range check on AU values.
        #[arg(long)]
        no_range_check: bool,
    },
    /// Per-session synchrony or baseline features.
    Synchrony {
        /// Manifest of processed sessions.
        #[arg(long)]
        manifest: PathBuf,
        /// Feature method, e.g. wp_ddtw, wcc, emd.
        #[arg(long)]
        method: String,
        /// Write the optimal warping path of every pair (warping methods only).
        #[arg(long)]
        emit_paths: bool,
    },
    /// Repeated cross-validation at fixed hyperparameters.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value = "enet")]
        model: ModelArg,
        /// Overrides the configured penalty strength.
        #[arg(long)]
        lambda: Option<f64>,
        /// Overrides the configured L1 share of the penalty.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
        /// Held-out predictions required per session.
        #[arg(long)]
        min_visits: Option<usize>,
        /// Model name recorded in the report.
        #[arg(long)]
        name: Option<String>,
        /// Record the train/test split of every fold.
        #[arg(long)]
        audit: bool,
    },
    /// Hyperparameter grid over (lambda, alpha), or a theta sweep.
    Grid {
        /// Feature file for the (lambda, alpha) grid.
        #[arg(long, conflicts_with = "manifest")]
        features: Option<PathBuf>,
        /// Processed manifest for a theta sweep.
        #[arg(long, requires = "thetas")]
        manifest: Option<PathBuf>,
        /// Comma-separated theta values in seconds.
        #[arg(long, value_delimiter = ',')]
        thetas: Vec<f64>,
        /// Warping method for the theta sweep.
        #[arg(long, default_value = "wp_ddtw")]
        method: String,
    },
    /// Shuffle controls.
    Control {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        mode: ControlMode,
        /// Block length in seconds for time shuffling.
        #[arg(long)]
        interval: Option<f64>,
        /// Whether both subjects share one block order.
        #[arg(long, value_enum)]
        scope: Option<ScopeArg>,
    },
    /// Generate synthetic sessions with known coupling.
    Synth,
    /// Collate cross-validation reports into a comparison table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
