//! The `hyres` command-line tool.
//!
//! Every subcommand writes its numeric results to files, prints a short human
//! summary, and leaves a [`RunManifest`] next to its outputs. Exit codes: 0 on
//! success, 1 on runtime or data errors, 2 on usage errors.

pub mod commands;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::RunManifest;
pub use svg::{curve_svg, emit_curve_svg};

/// A mistake in how the tool was invoked, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "hyres", version, about = "Hyperspectral cube degradation, restoration and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a cube from per-channel binary PGM files.
    Import(ImportArgs),
    /// Print a cube's dimensions and per-channel statistics.
    Info(InfoArgs),
    /// Filter, crop, blur, downsample and add noise.
    Degrade(DegradeArgs),
    /// Train a restorer on pairs cut from a high-resolution cube.
    Train(TrainArgs),
    /// Apply a trained restorer to a low-resolution cube.
    Restore(RestoreArgs),
    /// FRC curve and resolution estimate for one channel.
    Frc(FrcArgs),
    /// Difference PSF of a restored channel against a baseline, with a Gaussian fit.
    Diffpsf(DiffpsfArgs),
    /// BRISQUE, PIQE, CRISQUE and, with a reference, PSNR and SSIM per channel.
    Iqa(IqaArgs),
    /// Dice, Spearman, ROC-AUC or balanced accuracy from a CSV table.
    Stats(StatsArgs),
    /// Degrade, train, restore and evaluate a synthetic phantom end to end.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Frc,
    FrcSum,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DegradeOpts {
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Gaussian blur in high-resolution pixels before downsampling.
    #[arg(long, default_value_t = 0.0)]
    pub blur_sigma: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub noisy_fraction: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub snr_tau: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Low-resolution patch side.
    #[arg(long, default_value_t = 50)]
    pub patch: usize,
    #[arg(long, value_enum, default_value_t = LossKind::Frc)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 0.0)]
    pub adv_weight: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ImportArgs {
    /// Channel images in order.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Text file with one label per channel; defaults to 0, 1, 2, …
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub pixel_size: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Optional per-channel statistics CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub degrade: DegradeOpts,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// High-resolution cube; pairs are degraded from it.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Model file; the loss trace goes next to it as `<stem>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub degrade: DegradeOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct RestoreArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct FrcArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Second realization of the same scene (two-image FRC).
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Estimate from one image by diagonal splitting.
    #[arg(long)]
    pub single: bool,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = hyres_core::frc::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Overrides the cube's pixel size (µm).
    #[arg(long)]
    pub pixel_size: Option<f64>,
    /// Curve CSV; the plot goes next to it with an `.svg` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct DiffpsfArgs {
    /// Restored (sharper) cube.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Baseline (blurrier) cube of the same dimensions.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = hyres_core::psf::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Radial profile CSV; the plot goes next to it with an `.svg` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct IqaArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Reference cube for PSNR and SSIM.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// BRISQUE model file; the bundled model is used otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// CSV whose header selects the metric: `a,b` (Dice), `x,y` (Spearman),
    /// `score,label` (ROC-AUC) or `sensitivity,specificity` (balanced accuracy).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value_t = 1.5)]
    pub blur_sigma: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub noisy_fraction: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub snr_tau: f64,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, value_enum, default_value_t = LossKind::Frc)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 0.0)]
    pub adv_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Phantom pixel size (µm).
    #[arg(long, default_value_t = 10.0)]
    pub pixel_size: f64,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// The error chain joined by `: `, skipping causes the previous message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// Parses `argv` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let rest: Vec<String> = argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    match commands::execute(cli.command, &rest) {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("{}", <Cli as clap::CommandFactory>::command().render_usage());
            2
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}
