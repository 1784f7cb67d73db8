//! `symrefine`: generate, degrade and refine depth maps of mirror-symmetric
//! objects from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "symrefine", version, about = "Symmetry-constrained depth refinement")]
struct Cli {
    /// Worker threads for scene-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Add wall-clock `elapsed_ms` fields to written reports.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset of clean scenes.
    Gen(GenArgs),
    /// Write a degraded copy of every scene in a dataset.
    Corrupt(CorruptArgs),
    /// Rectify one scene so symmetric pairs share a scanline.
    Rectify(RectifyArgs),
    /// Match scanlines of a rectified scene and lift pairs to the original image.
    Match(MatchArgs),
    /// Drop pairs that fail the cycle-consistency check.
    Filter(FilterArgs),
    /// Refine one scene's depth and camera.
    Refine(RefineArgs),
    /// Score a depth map against ground truth.
    Eval(EvalArgs),
    /// Degrade, match, filter, refine and score a whole dataset.
    Pipeline(PipelineArgs),
    /// Grid-search the tradeoffs on a held-out split.
    Tune(TuneArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Generator settings (JSON); defaults are used when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub scenes: usize,
    #[arg(long, num_args = 2, value_names = ["W", "H"], default_values_t = [128, 128])]
    pub size: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Noise settings (JSON); defaults are used when omitted.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RectifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    /// Directory written by `rectify`.
    #[arg(long)]
    pub rectified: PathBuf,
    /// Matcher settings (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub corr: PathBuf,
    #[arg(long, default_value_t = 7.0, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Keep one pair per 2x2 block of sources.
    #[arg(long)]
    pub subsample: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Pairs to use; the manifest's own correspondence file when omitted.
    #[arg(long)]
    pub corr: Option<PathBuf>,
    /// Solver settings (JSON); `--lambda`, `--mu` and `--freeze-camera` override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub freeze_camera: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted depth (PFM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Scene manifest; its `ground_truth` is followed when present.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report written by `refine`, to score the refined camera as well.
    #[arg(long)]
    pub refine_report: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Pipeline settings (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for per-scene outputs (degraded scene, pairs, refined depth, report).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `default` or a comma-separated list of values used for both tradeoffs.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Options shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct Globals {
    pub threads: Option<usize>,
    pub timing: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return commands::CliError::Usage(first_line(&e.to_string())).report();
        }
    };
    let globals = Globals {
        threads: cli.threads,
        timing: cli.timing,
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a, globals),
        Command::Corrupt(a) => commands::corrupt(&a, globals),
        Command::Rectify(a) => commands::rectify(&a),
        Command::Match(a) => commands::match_pairs(&a),
        Command::Filter(a) => commands::filter(&a),
        Command::Refine(a) => commands::refine(&a, globals),
        Command::Eval(a) => commands::eval(&a),
        Command::Pipeline(a) => commands::pipeline(&a, globals),
        Command::Tune(a) => commands::tune(&a, globals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string()
}
