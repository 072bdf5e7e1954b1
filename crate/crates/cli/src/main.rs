//! `repaug`: synthesize, import, train on and evaluate pooled embeddings.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.
//! Verbosity is read from `REPAUG_LOG` (env_logger syntax, default `warn`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "repaug", version, about = "Representation-level augmentation for lung-sound embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset and write it as REPA.
    Synth(SynthArgs),
    /// Convert `label,split,v0,...` CSV rows to REPA.
    ImportCsv(ImportArgs),
    /// Train the classifier head for one or more seeds.
    Train(TrainArgs),
    /// Evaluate saved parameters on a REPA file.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on a random head.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = 768)]
    dim: usize,
    /// Per-class totals: normal,crackle,wheeze,both.
    #[arg(long, value_parser = parse_counts, required_unless_present = "icbhi_ratios", conflicts_with = "icbhi_ratios")]
    counts: Option<[usize; 4]>,
    /// Split --total across classes as 57.29/23.55/13.97/5.19 %.
    #[arg(long, requires = "total")]
    icbhi_ratios: bool,
    /// Total examples when using --icbhi-ratios.
    #[arg(long)]
    total: Option<usize>,
    /// Distance of each class mean from the origin.
    #[arg(long = "sep", default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of each class assigned to the test split.
    #[arg(long, default_value_t = 0.4)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ImportArgs {
    /// CSV file to read.
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of values per row.
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PresetArg {
    /// lr 5e-5, batch 8, 50 epochs
    Transformer,
    /// lr 1e-3, batch 64, 400 epochs
    Cnn,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AugArg {
    /// no augmentation
    None,
    /// band masking only
    Mask,
    /// noise on abnormal classes only
    Gen,
    /// masking, then noise on abnormal classes
    Repaug,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MaskFill {
    Mean,
    Zero,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// REPA file with train and test splits.
    #[arg(long = "in")]
    input: PathBuf,
    /// Optimizer recipe.
    #[arg(long, value_enum, default_value_t = PresetArg::Transformer)]
    preset: PresetArg,
    /// Augmentation applied to training batches.
    #[arg(long, value_enum, default_value_t = AugArg::Repaug)]
    aug: AugArg,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Override the preset learning rate (transformer 5e-5, cnn 1e-3).
    #[arg(long)]
    lr: Option<f64>,
    /// Override the preset batch size (transformer 8, cnn 64).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the preset epoch count (transformer 50, cnn 400).
    #[arg(long)]
    epochs: Option<usize>,
    /// Mask bands per example.
    #[arg(long, default_value_t = 2)]
    bands: usize,
    /// Exclusive upper bound on band length.
    #[arg(long, default_value_t = 288)]
    max_band_len: usize,
    /// Mean of the noise added to abnormal examples.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    noise_mean: f64,
    /// Standard deviation of that noise.
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    #[arg(long, value_enum, default_value_t = MaskFill::Mean, hide = true)]
    mask_fill: MaskFill,
    /// Where to write the JSON result.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the first seed's trained parameters (JSON).
    #[arg(long)]
    save_params: Option<PathBuf>,
    /// Worker threads for concurrent seeds (default: all cores).
    #[arg(long)]
    parallel_seeds: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Parameters written by `train --save-params`.
    #[arg(long)]
    params: PathBuf,
    /// REPA file; its test split is evaluated.
    #[arg(long = "in")]
    input: PathBuf,
    /// Print the report as JSON instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    /// Embedding dimension of the random head.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Number of random examples.
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

fn parse_counts(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 comma-separated counts, got {}", parts.len()));
    }
    let mut out = [0; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REPAUG_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
