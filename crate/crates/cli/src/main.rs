//! `cubitopo`: barcodes, Betti checks, topological repair, evaluation,
//! phantom corpora and timing from the command line.
//!
//! Exit status is 0 on success, 1 when a computation or write fails, and 2
//! for bad usage or invalid input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cubitopo::phantom::Task;
use cubitopo::Construction;

#[derive(Parser, Debug)]
#[command(name = "cubitopo", version, about = "Cubical persistent homology for multi-class segmentations")]
struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true, env = "CUBITOPO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Persistence barcode of a 2D/3D field as CSV.
    Barcode(BarcodeArgs),
    /// Betti numbers of a field's superlevel sets at given thresholds.
    Betti(BettiArgs),
    /// Topological post-processing of a probability stack with Adam.
    Optimize(OptimizeArgs),
    /// Betti error, Dice and Hausdorff of a prediction against ground truth.
    Evaluate(EvaluateArgs),
    /// Synthetic cardiac cases with injected topological defects.
    Phantom(PhantomArgs),
    /// Wall-clock timings of barcodes and full repair runs.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct BarcodeArgs {
    /// Field as `.npy` (float32 or float64).
    pub field: PathBuf,
    #[arg(long, short, default_value = "v", value_parser = parse_construction)]
    pub construction: Construction,
    /// Highest homology dimension; defaults to `ndim - 1`.
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BettiArgs {
    pub field: PathBuf,
    #[arg(long, short, default_value = "v", value_parser = parse_construction)]
    pub construction: Construction,
    /// Superlevel thresholds.
    #[arg(long = "threshold", short, default_values_t = [0.5], allow_negative_numbers = true)]
    pub thresholds: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Probability stack `(K, *dims)` as `.npy`.
    pub probs: PathBuf,
    /// Betti prior JSON.
    #[arg(long)]
    pub prior: PathBuf,
    /// Adapted probabilities are written here.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-iteration losses as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Record wall-clock time in the trace (otherwise the column is zero).
    #[arg(long)]
    pub timing: bool,
    /// Weight of the similarity term; 1000 in 2D and 1 in 3D by default.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = "v", value_parser = parse_construction)]
    pub construction: Construction,
    /// Floor probabilities at this value before taking logs.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-7")]
    pub clamp: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted labels (integer `.npy`, 0 = background) or probabilities
    /// (float `(K, *dims)`, reduced by argmax).
    pub pred: PathBuf,
    /// Ground-truth labels.
    pub gt: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    /// Voxel spacing, e.g. `1.25,1.25`.
    #[arg(long, value_delimiter = ',')]
    pub spacing: Option<Vec<f64>>,
    #[arg(long, short, default_value = "v", value_parser = parse_construction)]
    pub construction: Construction,
    /// Keep only the largest component per class before scoring.
    #[arg(long)]
    pub cca: bool,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// One-row CSV report.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Case name in the report.
    #[arg(long)]
    pub case: Option<String>,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Output directory; one `case_NNN` folder per case.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid extents, e.g. `96,96`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// `kind:target[:magnitude]`, repeatable.
    #[arg(long = "defect")]
    pub defects: Vec<String>,
    /// One or two random defects per case instead of `--defect`.
    #[arg(long, conflicts_with = "defects")]
    pub random_defects: bool,
    #[arg(long, default_value_t = 0.25)]
    pub softness: f64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Grid extents, e.g. `352x352` or `192x160x160`.
    #[arg(long, default_value = "352x352")]
    pub shape: String,
    /// Time this field instead of uniform noise.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, short, default_value = "v", value_parser = parse_construction)]
    pub construction: Construction,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also time a full repair run on a 2D phantom of this shape.
    #[arg(long)]
    pub optimize: bool,
    /// JSON report; the summary always goes to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_construction(s: &str) -> Result<Construction, String> {
    s.parse().map_err(|e: cubitopo::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: cubitopo::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::init_threads(cli.threads).and_then(|()| match &cli.command {
        Command::Barcode(a) => commands::barcode(a),
        Command::Betti(a) => commands::betti(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Phantom(a) => commands::phantom(a),
        Command::Bench(a) => commands::bench(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cubitopo: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
