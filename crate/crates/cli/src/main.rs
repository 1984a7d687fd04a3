//! `fuse`: data preparation, training, sampling and evaluation for dual-pocket ligand diffusion.

mod commands;
mod manifest;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fuse_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(fuse_core::Error::Io(_)) | CliError::Io { .. } => "io",
            CliError::Core(fuse_core::Error::Parse(_) | fuse_core::Error::Json(_)) => "parse",
            CliError::Core(_) => "runtime",
            CliError::Usage(_) => "usage",
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fuse", version, about = "Joint diffusion of one ligand graph with a pose in each of two pockets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build dual-target training tuples from complex records.
    DeriveDataset(DeriveArgs),
    /// Train a denoiser.
    Train(TrainArgs),
    /// Generate ligands for a pocket pair.
    Sample(SampleArgs),
    /// Compute set-level metrics for generated samples.
    Eval(EvalArgs),
    /// Check swap, rigid-motion and coupling properties of a checkpoint.
    CheckSymmetry(SymmetryArgs),
    /// Write synthetic complex records with planted cross-target repeats.
    MockData(MockArgs),
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    /// Complex records (JSON Lines).
    #[arg(long)]
    pub records: PathBuf,
    /// Output dataset (JSON Lines of dual instances).
    #[arg(long)]
    pub out: PathBuf,
    /// Pocket radius in Å.
    #[arg(long, default_value_t = fuse_core::dataset::POCKET_CUTOFF)]
    pub cutoff: f64,
    /// Derivation report (JSON); defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training set (JSON Lines of dual instances).
    #[arg(long)]
    pub data: PathBuf,
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Final checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, env = "FUSE_SEED")]
    pub seed: Option<u64>,
    /// Overrides the configured number of optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub no_bond_gen: bool,
    #[arg(long)]
    pub no_dlcf: bool,
    /// Loss curve CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
    /// Directory for periodic checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Pockets (JSON Lines): either pocket objects (first two used) or dual instances.
    #[arg(long)]
    pub pockets: PathBuf,
    /// Which dual instance to take the pockets from.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// full, no-bond or sequential.
    #[arg(long, default_value = "full")]
    pub mode: fuse_core::sample::SampleMode,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed ligand size; by default drawn from the training-set histogram.
    #[arg(long)]
    pub n_atoms: Option<usize>,
    /// Diffusion length; must match the checkpoint.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, env = "FUSE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Generated samples (JSON Lines).
    #[arg(long)]
    pub samples: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SymmetryArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, env = "FUSE_SEED")]
    pub seed: Option<u64>,
    /// Generated samples for the rigid-alignment check.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Output report (JSON); printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value_t = 5)]
    pub ligands: usize,
    #[arg(long, default_value_t = 3)]
    pub targets: usize,
    /// Targets each ligand is planted in; all by default.
    #[arg(long)]
    pub targets_per_ligand: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub min_atoms: usize,
    #[arg(long, default_value_t = 10)]
    pub max_atoms: usize,
    #[arg(long, env = "FUSE_SEED")]
    pub seed: Option<u64>,
    /// Output records (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::DeriveDataset(a) => commands::derive_dataset(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Eval(a) => commands::eval(a),
        Command::CheckSymmetry(a) => commands::check_symmetry(a),
        Command::MockData(a) => commands::mock_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
