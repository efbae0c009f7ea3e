//! `harmopack`: pack the rectangles `1/i x 1/(i+1)`, verify the result and
//! evaluate the bounds built on it.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harmopack::boxstore::BoxOrder;
use harmopack::geometry::OrientationRule;
use harmopack::numerics::parse_count;
use harmopack::{NumericMode, SplitPolicy};

/// Exit status for a run that stopped because a rectangle did not fit.
pub const EXIT_NO_FIT: u8 = 2;
/// Exit status for a failed check.
pub const EXIT_INVALID: u8 = 3;
/// Exit status for unusable flags or input files.
pub const EXIT_BAD_INPUT: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "harmopack", version, about = "Greedy packing of the rectangles 1/i x 1/(i+1) into the unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pack the first N rectangles and write the run directory.
    Pack(PackArgs),
    /// Check a placement stream for overlaps, containment and conservation.
    Verify(VerifyArgs),
    /// Print the ratio series of a finished run.
    Stats(StatsArgs),
    /// Strip bound for the rectangles from N on.
    Bound(BoundArgs),
    /// Grid continuation of a run into its largest empty box.
    Continue(ContinueArgs),
    /// Container side and excess area after M packed rectangles.
    Epsilon(EpsilonArgs),
    /// Draw a placement stream as SVG.
    Render(RenderArgs),
}

fn count(s: &str) -> Result<u64, String> {
    parse_count(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct PackArgs {
    /// Number of rectangles to place (`1e6` style accepted).
    #[arg(long, value_parser = count)]
    pub n: u64,
    #[arg(long, default_value = "float")]
    pub mode: NumericMode,
    /// Guillotine cut: `adaptive`, `a` (vertical) or `b` (horizontal).
    #[arg(long, default_value_t = harmopack::PackerConfig::DEFAULT_SPLIT)]
    pub split: SplitPolicy,
    /// Box order: `short` (short side, then area) or `area` (area, then width).
    #[arg(long, default_value_t = harmopack::PackerConfig::DEFAULT_ORDER)]
    pub order: BoxOrder,
    /// Orientation rule: `across` or `unrotated`.
    #[arg(long, default_value_t = harmopack::PackerConfig::DEFAULT_ORIENTATION)]
    pub orient: OrientationRule,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub rotate: bool,
    /// Drop boxes too small for every rectangle up to N.
    #[arg(long)]
    pub prune: bool,
    /// Run directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Save a checkpoint every this many rectangles (0 = never).
    #[arg(long, default_value = "0", value_parser = count)]
    pub checkpoint_every: u64,
    /// `default`, `none`, `every:K` or a comma list such as `1000,1e4`.
    #[arg(long, default_value = "default")]
    pub snapshots: String,
    /// Continue from the run directory's checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many rectangles as if interrupted.
    #[arg(long, value_parser = count)]
    pub stop_after: Option<u64>,
    /// Skip writing placements.csv.
    #[arg(long)]
    pub no_placements: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub placements: PathBuf,
    /// Box dump for the conservation check.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// Also run the all-pairs check when the stream has at most this many rectangles.
    #[arg(long, default_value = "2000", value_parser = count)]
    pub brute_force_max: u64,
    /// Container side (decimal or p/q).
    #[arg(long, default_value = "1")]
    pub side: String,
    /// Compare float and exact host choices for the first K steps of the default policy.
    #[arg(long, value_parser = count)]
    pub replay: Option<u64>,
    /// Write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Run directory or snapshots.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write `n,ratio` rows here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long, value_parser = count)]
    pub n: u64,
    #[arg(long, default_value_t = harmopack::analysis::DEFAULT_ROWS)]
    pub rows: u32,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the glued layout of the first `--layout-rows` rows as a placement stream and verify it.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub layout_rows: u32,
    #[arg(long, default_value = "float")]
    pub layout_mode: NumericMode,
}

#[derive(Args, Debug)]
pub struct ContinueArgs {
    /// Width of the largest empty box (decimal or p/q, taken exactly).
    #[arg(long)]
    pub w: String,
    #[arg(long)]
    pub h: String,
    /// Rectangles already packed.
    #[arg(long, value_parser = count)]
    pub n0: u64,
    /// Excess-area target for the composed count.
    #[arg(long, default_value = "1.49e-11")]
    pub target: String,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EpsilonArgs {
    #[arg(long, value_parser = count)]
    pub m: u64,
    #[arg(long, default_value = "1.49e-11")]
    pub target: String,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Placement stream; without it the first `--n` rectangles are packed with the default policy.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Draw only the first N placements.
    #[arg(long, value_parser = count)]
    pub n: Option<u64>,
    #[arg(long, default_value = "packing.svg")]
    pub svg: PathBuf,
    /// Square side to draw; defaults to the larger of 1 and the stream's extent.
    #[arg(long)]
    pub side: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_BAD_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Pack(a) => commands::pack(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Bound(a) => commands::bound(&a),
        Command::Continue(a) => commands::continue_run(&a),
        Command::Epsilon(a) => commands::epsilon(&a),
        Command::Render(a) => commands::render(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
