mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lsvt", version, about = "Landslide scar tracking over NDVI image sequences")]
pub struct Cli {
    /// Progress messages on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Worker threads for per-frame stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute NDVI from red and near-infrared reflectance grids.
    Ndvi {
        #[arg(long)]
        red: PathBuf,
        #[arg(long)]
        nir: PathBuf,
        /// Divisor turning stored integers into reflectance.
        #[arg(long, default_value_t = 10000.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bilinear resampling to a new cell size.
    Resample {
        #[arg(long = "in")]
        input: PathBuf,
        /// Target cell size in metres.
        #[arg(long)]
        cell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble dated NDVI grids into a sequence with manifest and display frames.
    Build {
        #[arg(long)]
        frames: PathBuf,
        /// CSV with header `filename,date`.
        #[arg(long)]
        dates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Display::Png)]
        display: Display,
        /// Warn about gaps between consecutive frames longer than this.
        #[arg(long, default_value_t = 180)]
        gap_days: i64,
    },
    /// Segment frame 0 from prompts and propagate through the sequence.
    Track {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// External segmentation backend (native tracker if omitted).
        #[arg(long, env = "LSVT_BACKEND_URL")]
        backend_url: Option<String>,
    },
    /// Add prompts to a tracked session and re-propagate from their frame.
    Refine {
        /// Output directory of `track`, or its `session` subdirectory.
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
    },
    /// Score predicted masks against reference masks.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Report path; `.csv` writes the per-frame table, anything else JSON.
        #[arg(long)]
        out: PathBuf,
        /// Manifest supplying frame dates.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Evolution analytics.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic scenario with ground truth and prompts.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Add a second scar appearing at this frame.
        #[arg(long)]
        second_patch: Option<usize>,
        #[arg(long, value_enum, default_value_t = Display::Png)]
        display: Display,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Display {
    Png,
    Pgm,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub command: Analyze,
    /// Print the result as JSON on standard output.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Analyze {
    /// Area per frame as `frame_index,date,area_m2`.
    Area {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// New and lost scar between two masks.
    Diff {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        current: PathBuf,
        #[arg(long)]
        out_new: Option<PathBuf>,
        #[arg(long)]
        out_lost: Option<PathBuf>,
    },
    /// Frames whose area jumps above a multiple of the trailing median.
    Spikes {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        factor: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Split an area series into June-October and the rest of the year.
    Seasons {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out_summer: Option<PathBuf>,
        #[arg(long)]
        out_winter: Option<PathBuf>,
    },
    /// Same-season frame pairs across years.
    Pairs {
        #[arg(long)]
        series: PathBuf,
        /// First month of the window (1-12).
        #[arg(long)]
        from_month: u32,
        /// Last month of the window; defaults to `from_month`.
        #[arg(long)]
        to_month: Option<u32>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
