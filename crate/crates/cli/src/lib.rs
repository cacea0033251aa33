//! `mono3d` command line: target encoding checks, assignment BPR tables,
//! evaluation reports, BEV NMS and synthetic data generation.
//!
//! Exit codes: 0 success, 2 schema error in an input file, 3 validation
//! failure (bad ids, out-of-range values, a failed `--check`), 64 usage
//! error, 74 I/O error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mono3d_core::DatasetError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

/// Version tag written into every JSON report.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Dataset(DatasetError::Schema { .. } | DatasetError::VersionMismatch { .. }) => EXIT_SCHEMA,
            CliError::Dataset(DatasetError::Validation(_)) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Dataset(DatasetError::Io { .. }) | CliError::Write { .. } => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mono3d", version, about = "Monocular 3D detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode every annotation into regression targets and decode it back.
    Encode(EncodeArgs),
    /// Assign ground truths to feature locations and report best possible recall.
    Assign(AssignArgs),
    /// Evaluate detections against ground truth (mAP, TP errors, NDS).
    Evaluate(EvaluateArgs),
    /// Apply BEV non-maximum suppression to the detections of a dataset.
    Nms(NmsArgs),
    /// Generate synthetic ground truth with perturbed detections.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Dataset file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Fail with exit code 3 if the roundtrip error reaches the tolerance.
    #[arg(long)]
    pub check: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Write the encoded targets as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Distance,
    Area,
    Both,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    /// Center-sampling radius in strides.
    #[arg(long, default_value_t = 1.5)]
    pub radius: f64,
    /// Write the BPR table as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth dataset. Its detections are evaluated unless --pred is given.
    #[arg(long)]
    pub gt: PathBuf,
    /// Dataset whose detections replace those of --gt, matched by scene id.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// BEV IoU above which the lower-scored box is suppressed.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Merge all cameras in the ego frame instead of suppressing per camera.
    #[arg(long)]
    pub multiview: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output dataset (ground truth, plus detections unless --pred-out is given).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write detections to a separate dataset instead.
    #[arg(long)]
    pub pred_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 12)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 6)]
    pub cameras: usize,
    /// Restrict ground truths to these class ids.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<usize>,
    #[command(flatten)]
    pub perturb: PerturbArgs,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Fixed in-plane center offset (m).
    #[arg(long, default_value_t = 0.0)]
    pub translation_offset: f64,
    #[arg(long, default_value_t = 0.0)]
    pub translation_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub size_scale: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw_offset: f64,
    #[arg(long, default_value_t = 0.0)]
    pub yaw_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub velocity_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub attribute_flip: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
    /// Expected false positives per scene.
    #[arg(long, default_value_t = 0.0)]
    pub clutter: f64,
    /// Give every detection this score instead of a uniform draw.
    #[arg(long, conflicts_with_all = ["score_lo", "score_hi"])]
    pub score: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub score_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub score_hi: f64,
}

/// Parses `args` (program name first) and runs the command, writing
/// reports to `out` and diagnostics to stderr. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    eprintln!();
                    eprint!("{}", Cli::command().render_help());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Encode(a) => commands::encode(&a, out),
        Command::Assign(a) => commands::assign(&a, out),
        Command::Evaluate(a) => commands::evaluate(&a, out),
        Command::Nms(a) => commands::nms(&a, out),
        Command::Simulate(a) => commands::simulate(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
