//! `irnet`: data preparation, training, inference, evaluation, analysis and
//! architecture audits for IRNet inverse tone mapping models.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exit::CliError;

#[derive(Parser, Debug)]
#[command(name = "irnet", version, about, args_override_self = true)]
pub struct Cli {
    /// Worker threads for data-parallel kernels. 1 is the deterministic
    /// golden path; results are bit-identical for any value.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Flat key=value file supplying defaults for the subcommand's flags.
    /// Keys are long flag names without dashes; flags given on the command
    /// line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pair SDR/HDR images by file stem, write a manifest, optionally cache
    /// training patches.
    Prepare(PrepareArgs),
    /// Train a model with L1 loss, Adam and warm-restart cosine annealing.
    Train(TrainArgs),
    /// Convert one 8-bit SDR PNG into a 16-bit HDR PNG.
    Infer(InferArgs),
    /// Per-image and mean PSNR/SSIM over a manifest.
    Eval(EvalArgs),
    /// Parameter count and compute cost of a configuration.
    Audit(AuditArgs),
    /// Luminance statistics of a manifest, or a 1-D luma profile of two images.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// itm (same resolution) or sritm (x4 super-resolution).
    #[arg(long, default_value = "itm")]
    pub mode: String,
    /// Improved residual blocks; defaults to 2 for itm and 5 for sritm.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Feature channels.
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    /// Negative slope of the leaky ReLUs.
    #[arg(long, default_value_t = 0.1)]
    pub lrelu_slope: f32,
    /// Use multiplicative attention without the residual connection.
    #[arg(long)]
    pub no_cca_residual: bool,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long, value_name = "DIR")]
    pub sdr_dir: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub hdr_dir: PathBuf,
    /// Tab-separated manifest to write.
    #[arg(long, value_name = "FILE")]
    pub out_manifest: PathBuf,
    /// Directory for the cropped patch cache.
    #[arg(long, value_name = "DIR")]
    pub patches_out: Option<PathBuf>,
    /// Crop geometry: itm or sritm (SDR side downsampled x4).
    #[arg(long, default_value = "itm")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the HDR patch.
    #[arg(long, default_value_t = 256)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub patches_per_image: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training pairs; patches are cropped in memory.
    #[arg(long, value_name = "FILE", required_unless_present = "patches")]
    pub manifest: Option<PathBuf>,
    /// Patch cache written by `prepare --patches-out`.
    #[arg(long, value_name = "DIR", conflicts_with = "manifest")]
    pub patches: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for last.ckpt, best.ckpt and history.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr_max: f64,
    #[arg(long, default_value_t = 1e-11)]
    pub lr_min: f64,
    /// Epochs per cosine cycle before the learning rate restarts.
    #[arg(long, default_value_t = 60)]
    pub restart_period: usize,
    /// Step the schedule once per epoch instead of per iteration.
    #[arg(long)]
    pub per_epoch_lr: bool,
    /// Fraction of patches held out for validation PSNR (0 trains on all).
    #[arg(long, default_value_t = 0.02)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Disable random flips and rotations.
    #[arg(long)]
    pub no_augment: bool,
    /// HDR patch side when cropping from a manifest.
    #[arg(long, default_value_t = 256)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub patches_per_image: usize,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long, value_name = "FILE")]
    pub ckpt: PathBuf,
    /// 8-bit RGB PNG.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// 16-bit RGB PNG to write.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Run on overlapping tiles of this input size (0 = whole image).
    #[arg(long, default_value_t = 0)]
    pub tile: usize,
    #[arg(long, default_value_t = 16)]
    pub overlap: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub ckpt: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// CSV report to write.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Run on overlapping tiles of this input size (0 = whole image).
    #[arg(long, default_value_t = 0)]
    pub tile: usize,
    #[arg(long, default_value_t = 16)]
    pub overlap: usize,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Input height for MACs/FLOPs.
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    /// Input width for MACs/FLOPs.
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Pairs to summarize (one luminance record per pair).
    #[arg(long, value_name = "FILE", required_unless_present = "profile")]
    pub manifest: Option<PathBuf>,
    /// Luma of two images along one row: IMG_A IMG_B ROW X0 X1 (columns X0..X1).
    #[arg(
        long,
        num_args = 5,
        value_names = ["IMG_A", "IMG_B", "ROW", "X0", "X1"],
        conflicts_with = "manifest"
    )]
    pub profile: Option<Vec<String>>,
    /// CSV output.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Luma coefficients for SDR images (rec709 or rec2020).
    #[arg(long, default_value = "rec709")]
    pub sdr_luma: String,
    /// Luma coefficients for HDR images (rec709 or rec2020).
    #[arg(long, default_value = "rec2020")]
    pub hdr_luma: String,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match config::parse(&argv) {
        Ok(cli) => cli,
        Err(e) => return e.report(),
    };
    if let Err(e) = configure_threads(cli.threads) {
        return e.report();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    Ok(())
}
