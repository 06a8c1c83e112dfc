use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use kcounter::tune::Loss;
use kcounter::{Connectivity, ThresholdVector};

/// Seed used by randomized subcommands when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_611;

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive finite number")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a non-negative finite number")),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not in (0, 1]")),
    }
}

fn brightness(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (-1.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not in [-1, 1]")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "kcounter", version, about = "Count stained cells with threshold features and a kernel smoother")]
pub struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Images to feature CSV (`image_id,r_1,...,r_T`).
    Extract(ExtractArgs),
    /// Manifest or dataset to model file; tunes eta by leave-one-out unless `--eta` is given.
    Train(TrainArgs),
    /// Model plus images to prediction CSV (`image_id,prediction,rounded,variance`).
    Predict(PredictArgs),
    /// Model to smoothed labels CSV, flagging uncertain labels for review.
    Smooth(SmoothArgs),
    /// Synthetic convergence experiment to CSV (`T,gamma,mse_mean,mse_stderr,runs,D,seed`).
    Synth(SynthArgs),
    /// Monte Carlo threshold design from annotated images.
    DesignThresholds(DesignArgs),
    /// Brightness and interval-midpoint augmentation to a dataset file.
    Augment(AugmentArgs),
    /// Bounds on the true count implied by observed counts.
    Bounds(BoundsArgs),
}

/// Where images come from: a manifest or a list of files.
#[derive(Debug, Args)]
pub struct ImageInput {
    /// Dataset manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Image files (instead of a manifest).
    #[arg(value_name = "IMAGE")]
    pub images: Vec<PathBuf>,

    /// Feature cache file, created if missing.
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Threshold vector `t1,t2,t3` (repeatable; order defines r_1..r_T).
    #[arg(long = "threshold", value_name = "T1,T2,T3")]
    pub thresholds: Vec<ThresholdVector>,

    /// File with one threshold vector per line.
    #[arg(long, value_name = "PATH")]
    pub thresholds_file: Option<PathBuf>,

    /// Pixel connectivity for object counting [default: manifest value, else 8].
    #[arg(long, value_name = "4|8")]
    pub connectivity: Option<Connectivity>,

    /// Smallest object area in pixels that is counted [default: manifest value, else 1].
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub min_area: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: ImageInput,

    #[command(flatten)]
    pub thresholds: ThresholdArgs,

    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    L1,
    Linf,
    Mse,
    NegR2,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::L1 => Loss::L1,
            LossArg::Linf => Loss::LInf,
            LossArg::Mse => Loss::Mse,
            LossArg::NegR2 => Loss::NegR2,
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Smallest 1/eta of the search grid.
    #[arg(long, default_value_t = 1e-3, value_name = "X", value_parser = positive)]
    pub grid_min: f64,

    /// Largest 1/eta of the search grid.
    #[arg(long, default_value_t = 1e3, value_name = "X", value_parser = positive)]
    pub grid_max: f64,

    /// Number of log-spaced grid points.
    #[arg(long, default_value_t = 61, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub grid_points: u32,

    /// Golden-section steps between the grid neighbors of the grid optimum.
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub refine: usize,

    /// Leave-one-out loss.
    #[arg(long, value_enum, default_value_t = LossArg::Mse)]
    pub loss: LossArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StandardizationArg {
    /// Training images plus the vector being predicted.
    Pooled,
    /// Training images only.
    TrainingOnly,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Dataset file written by `augment`.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,

    /// Feature cache file (with `--manifest`).
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,

    /// Fixed bandwidth; skips leave-one-out tuning.
    #[arg(long, value_name = "ETA", value_parser = positive)]
    pub eta: Option<f64>,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Round held-out predictions to integers before scoring.
    #[arg(long)]
    pub round: bool,

    /// Write the loss curve as CSV (`inv_eta,eta,loss`).
    #[arg(long, value_name = "PATH")]
    pub curve: Option<PathBuf>,

    /// Relative loss tolerance defining the reported flat region of the curve.
    #[arg(long, default_value_t = 0.01, value_name = "FRAC", value_parser = non_negative)]
    pub flat_tolerance: f64,

    /// Standardization pool.
    #[arg(long, value_enum, default_value_t = StandardizationArg::Pooled)]
    pub standardization: StandardizationArg,

    /// Model file to write.
    #[arg(short, long, value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EtaRule {
    /// One rule-of-thumb bandwidth per test image.
    Global,
    /// One rule-of-thumb bandwidth per training image and test image.
    PerDatum,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file from `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    #[command(flatten)]
    pub input: ImageInput,

    /// Adapt thresholds to each image's color distribution.
    #[arg(long)]
    pub adaptive: bool,

    /// Scale each training label by its expert confidence (no renormalization).
    #[arg(long)]
    pub confidence_weighted: bool,

    /// Replace the model bandwidth by a rule-of-thumb value per test image.
    #[arg(long, value_enum, value_name = "RULE")]
    pub eta_rule: Option<EtaRule>,

    /// Bandwidth used when the rule of thumb gives 0.
    #[arg(long, default_value_t = 1e-3, value_name = "ETA", value_parser = positive)]
    pub eta_fallback: f64,

    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    /// Model file from `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    /// Flag a label for review when 2 sigma exceeds this fraction of its smoothed value.
    #[arg(long, default_value_t = 0.25, value_name = "FRAC", value_parser = non_negative)]
    pub review_fraction: f64,

    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Error of the smoothed labels.
    Smoothing,
    /// Error of leave-one-out predictions.
    Prediction,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Numbers of filtered images T.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,50,100,200", value_name = "LIST", value_parser = clap::value_parser!(u32).range(2..))]
    pub t_values: Vec<u32>,

    /// Images per run.
    #[arg(long = "images", default_value_t = 2000, value_name = "D", value_parser = clap::value_parser!(u32).range(2..))]
    pub d: u32,

    /// Independent runs averaged per cell.
    #[arg(long, default_value_t = 200, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub runs: u32,

    /// Label-noise half-widths.
    #[arg(long, value_delimiter = ',', default_value = "0", value_name = "LIST")]
    pub gammas: Vec<u32>,

    /// Largest true count.
    #[arg(long, default_value_t = 200, value_name = "N")]
    pub n_max: u32,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Fixed bandwidth instead of per-run leave-one-out.
    #[arg(long, value_name = "ETA", value_parser = positive)]
    pub eta: Option<f64>,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Which estimate is scored against the true counts.
    #[arg(long, value_enum, default_value_t = ModeArg::Smoothing)]
    pub mode: ModeArg,

    /// Output CSV (`-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Annotated image as `IMAGE:LABELS`, where LABELS is a raster with one
    /// distinct non-black value per true cell (repeatable; TP/FP are pooled).
    #[arg(long = "pair", required = true, value_name = "IMAGE:LABELS")]
    pub pairs: Vec<String>,

    /// Monte Carlo samples.
    #[arg(long, default_value_t = 10_000, value_name = "M", value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Number of threshold vectors to select by SNR.
    #[arg(long, value_name = "T", value_parser = clap::value_parser!(u32).range(1..))]
    pub select: Option<u32>,

    /// Write the selected vectors here, one per line.
    #[arg(long, value_name = "PATH", requires = "select")]
    pub thresholds_out: Option<PathBuf>,

    #[arg(long, default_value = "8", value_name = "4|8")]
    pub connectivity: Connectivity,

    #[arg(long, default_value_t = 1, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub min_area: u32,

    /// Optima table CSV (`tp,fp,snr,t1,t2,t3`; `-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Dataset file (from an earlier `augment`).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,

    /// Feature cache file (with `--manifest`).
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,

    /// Brightness offset added to every channel (repeatable).
    #[arg(long = "delta", allow_negative_numbers = true, value_name = "DELTA", value_parser = brightness)]
    pub deltas: Vec<f64>,

    /// Featurize shifted images with the fixed thresholds instead of adapted ones.
    #[arg(long)]
    pub fixed_thresholds: bool,

    /// Dataset file to write.
    #[arg(short, long, value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Fraction of true cells captured.
    #[arg(long, value_parser = fraction)]
    pub alpha: f64,

    /// Smallest artifact count [default: from alpha].
    #[arg(long)]
    pub v: Option<u32>,

    /// Largest artifact count [default: from alpha].
    #[arg(long)]
    pub s: Option<u32>,

    /// Observed object counts.
    #[arg(long, value_delimiter = ',', required = true, value_name = "LIST")]
    pub observed: Vec<u64>,

    /// Widen the bounds by the half unit lost to rounding.
    #[arg(long)]
    pub with_rounding: bool,

    /// Output CSV (`r,alpha,v,s,lower,upper`; `-` for stdout).
    #[arg(short, long, default_value = "-", value_name = "PATH")]
    pub output: PathBuf,
}
