//! `pedseg`: batch driver for the pediatric brain-tumor segmentation
//! toolkit. Every pipeline is a subcommand with machine-readable outputs —
//! postprocessing, lesion-wise evaluation, cohort ratio statistics, ROC
//! sweeps, gradient verification, parameter accounting, the learning-rate
//! schedule, toy training, and augmentation previews.
//!
//! Each run writes its reports into `--out` together with `manifest.json`,
//! a reproducibility record of the resolved settings, inputs, outputs, and
//! seed. Exit codes: 0 on success, 2 for input or configuration errors, 3
//! for checks that ran and failed; failures print one structured JSON line
//! on stderr and never panic.

mod cohort;
mod commands;
mod error;
mod io;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::manifest::RunContext;

#[derive(Debug, Parser)]
#[command(name = "pedseg", version, about = "Batch pipelines for 3D tumor segmentation")]
struct Cli {
    /// Key = value config file layered over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for all randomness in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for per-case parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Directory for reports and the run manifest.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refine a predicted labelmap: intensity-ratio relabeling, then
    /// removal of small components.
    Postprocess {
        /// Predicted labelmap (.nii or .nii.gz).
        #[arg(long)]
        seg: PathBuf,
        /// Contrast-enhanced T1 volume.
        #[arg(long)]
        t1ce: PathBuf,
        /// Plain T1 volume.
        #[arg(long)]
        t1: PathBuf,
    },

    /// Lesion-wise Dice and surface-Dice report for one prediction.
    Metrics {
        /// Predicted labelmap.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth labelmap.
        #[arg(long)]
        gt: PathBuf,
        /// Surface-distance tolerance in millimetres.
        #[arg(long, default_value_t = 1.0)]
        tolerance_mm: f64,
    },

    /// Percentile thresholds of the T1CE/T1 ratio pooled over a cohort.
    RatioStats {
        /// Cohort manifest: one case directory per line.
        cohort: PathBuf,
        /// Percentile of the enhancing-class ratios (suggested lower threshold).
        #[arg(long, default_value_t = 5.0)]
        enhancing_percentile: f64,
        /// Percentile of the non-enhancing-class ratios (suggested upper threshold).
        #[arg(long, default_value_t = 95.0)]
        non_enhancing_percentile: f64,
    },

    /// ROC curve of the ratio as an enhancing-vs-non-enhancing classifier.
    Roc {
        /// Cohort manifest: one case directory per line.
        cohort: PathBuf,
    },

    /// Finite-difference gradient checks over every differentiable op.
    Gradcheck {
        /// Seeds per op; each op is swept once per seed.
        #[arg(long, default_value_t = 20)]
        rounds: usize,
    },

    /// Per-stage parameter tables: baseline vs widened vs separable.
    Paramcount {
        /// Cubic kernel extent.
        #[arg(long, default_value_t = 3)]
        kernel: usize,
    },

    /// The cosine learning-rate table over a full horizon.
    Schedule {
        /// Initial learning rate.
        #[arg(long, default_value_t = pedseg_train::schedule::DEFAULT_LR)]
        eta0: f64,
        /// Schedule length in epochs.
        #[arg(long, default_value_t = pedseg_train::schedule::DEFAULT_HORIZON)]
        horizon: usize,
    },

    /// Train the synthetic-blob model and write its log and outcome.
    TrainToy {
        /// Optimizer steps to run.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Cosine horizon the steps are cut from.
        #[arg(long, default_value_t = pedseg_train::schedule::DEFAULT_HORIZON)]
        horizon: usize,
        /// False-positive penalty weight.
        #[arg(long, default_value_t = 0.1)]
        theta: f64,
        /// Initialization variance exponent.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Channel width of the hidden block.
        #[arg(long, default_value_t = 8)]
        channels: usize,
        /// Volumes per step.
        #[arg(long, default_value_t = 4)]
        batch: usize,
    },

    /// Apply the augmentation pipeline to one image/label pair.
    Augment {
        /// Input image volume.
        #[arg(long)]
        image: PathBuf,
        /// Input labelmap.
        #[arg(long)]
        labels: PathBuf,
        /// Case index selecting the per-case random stream.
        #[arg(long, default_value_t = 0)]
        case: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Postprocess { .. } => "postprocess",
            Command::Metrics { .. } => "metrics",
            Command::RatioStats { .. } => "ratio-stats",
            Command::Roc { .. } => "roc",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Paramcount { .. } => "paramcount",
            Command::Schedule { .. } => "schedule",
            Command::TrainToy { .. } => "train-toy",
            Command::Augment { .. } => "augment",
        }
    }
}

fn dispatch(command: &Command, ctx: &mut RunContext) -> Result<()> {
    match command {
        Command::Postprocess { seg, t1ce, t1 } => commands::postprocess::run(ctx, seg, t1ce, t1),
        Command::Metrics {
            pred,
            gt,
            tolerance_mm,
        } => commands::metrics::run(ctx, pred, gt, *tolerance_mm),
        Command::RatioStats {
            cohort,
            enhancing_percentile,
            non_enhancing_percentile,
        } => commands::ratio::run_stats(ctx, cohort, *enhancing_percentile, *non_enhancing_percentile),
        Command::Roc { cohort } => commands::ratio::run_roc(ctx, cohort),
        Command::Gradcheck { rounds } => commands::gradcheck::run(ctx, *rounds),
        Command::Paramcount { kernel } => commands::paramcount::run(ctx, *kernel),
        Command::Schedule { eta0, horizon } => commands::schedule::run(ctx, *eta0, *horizon),
        Command::TrainToy {
            steps,
            horizon,
            theta,
            alpha,
            channels,
            batch,
        } => commands::toy::run(ctx, *steps, *horizon, *theta, *alpha, *channels, *batch),
        Command::Augment {
            image,
            labels,
            case,
        } => commands::augment::run(ctx, image, labels, *case),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = RunContext::new(cli.config.as_deref(), cli.seed, cli.jobs, cli.out)?;
    let result = dispatch(&cli.command, &mut ctx);

    // A manifest is emitted whenever the run produced a verdict — success
    // or a failed check. Input errors abort before there is anything to
    // reproduce.
    if matches!(result, Ok(()) | Err(CliError::Check(_))) {
        let finished = ctx.finish(cli.command.name());
        if result.is_ok() {
            finished?;
        }
    }
    result
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", err.structured());
        std::process::exit(err.exit_code());
    }
}
