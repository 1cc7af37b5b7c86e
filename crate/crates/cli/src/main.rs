//! `cdtkit`: batch transforms, synthetic data and classification experiments.

mod commands;
mod error;
mod experiment;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use cdtkit::classify::DEFAULT_SHRINKAGE;
use cdtkit::density::DEFAULT_EPSILON_FLOOR;
use clap::{Args, Parser, Subcommand};

use commands::Context;
use error::Result;

#[derive(Debug, Parser)]
#[command(name = "cdtkit", version, about = "Cumulative distribution transform toolkit")]
struct Cli {
    /// Seed for every random choice; overrides a config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Directory for outputs given as relative paths.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward transform of every density row.
    Transform(TransformCmd),
    /// Densities back from transform rows.
    Inverse(InverseCmd),
    /// Synthetic two-class datasets from a JSON config.
    Generate { config: PathBuf },
    /// Feature extraction from raw signals.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Cross-validated error tables from a JSON config.
    Evaluate { config: PathBuf },
    /// 2-D penalized LDA embedding as SVG and CSV.
    Project(ProjectCmd),
}

#[derive(Debug, Args)]
struct TransformCmd {
    input: PathBuf,
    output: PathBuf,
    /// Number of reference grid points.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// `uniform` or a CSV with header `x,density`.
    #[arg(long, default_value = "uniform")]
    reference: String,
    #[arg(long, default_value_t = DEFAULT_EPSILON_FLOOR)]
    epsilon_floor: f64,
    /// Density domain `LO,HI`; defaults to the input sidecar, else 0,1.
    #[arg(long, value_parser = io::parse_interval, allow_hyphen_values = true)]
    domain: Option<[f64; 2]>,
}

#[derive(Debug, Args)]
struct InverseCmd {
    input: PathBuf,
    output: PathBuf,
    /// Output bins; defaults to the original density grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Output domain `LO,HI`; defaults to the original density domain.
    #[arg(long, value_parser = io::parse_interval, allow_hyphen_values = true)]
    domain: Option<[f64; 2]>,
}

#[derive(Debug, Subcommand)]
enum ExtractCmd {
    /// Energy x^2 + y^2 + z^2 of tri-axis signals.
    Energy {
        input: PathBuf,
        output: PathBuf,
        /// Right-pad with zeros to the longest signal.
        #[arg(long)]
        zero_pad: bool,
    },
    /// Equal-width histograms of each signal.
    Histogram {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        /// Binning range `LO,HI`; defaults to the pooled min and max.
        #[arg(long, value_parser = io::parse_interval, allow_hyphen_values = true)]
        range: Option<[f64; 2]>,
        /// Reuse the range of an earlier histogram output (file or sidecar).
        #[arg(long, conflicts_with = "range")]
        range_from: Option<PathBuf>,
        /// Input is tri-axis; histogram its energy.
        #[arg(long)]
        tri_axis: bool,
        #[arg(long, default_value_t = DEFAULT_EPSILON_FLOOR)]
        epsilon_floor: f64,
    },
    /// Side-by-side concatenation of equally sized feature blocks.
    Concat {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ProjectCmd {
    input: PathBuf,
    /// Share of each class used to fit the embedding.
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value = "projection.svg")]
    svg: PathBuf,
    #[arg(long, default_value = "projection.csv")]
    csv: PathBuf,
    /// Penalized LDA blend; tuned by cross-validation on the training rows
    /// when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SHRINKAGE)]
    ridge: f64,
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context {
        seed: cli.seed,
        quiet: cli.quiet,
        output_dir: cli.output_dir,
    };
    match cli.command {
        Command::Transform(a) => commands::transform(
            &ctx,
            &commands::TransformArgs {
                input: a.input,
                output: a.output,
                grid: a.grid,
                reference: a.reference,
                epsilon_floor: a.epsilon_floor,
                domain: a.domain,
            },
        ),
        Command::Inverse(a) => commands::inverse(
            &ctx,
            &commands::InverseArgs {
                input: a.input,
                output: a.output,
                grid: a.grid,
                domain: a.domain,
            },
        ),
        Command::Generate { config } => experiment::generate(&ctx, &config),
        Command::Evaluate { config } => experiment::evaluate(&ctx, &config),
        Command::Extract(ExtractCmd::Energy {
            input,
            output,
            zero_pad,
        }) => commands::extract_energy(&ctx, &input, &output, zero_pad),
        Command::Extract(ExtractCmd::Histogram {
            input,
            output,
            bins,
            range,
            range_from,
            tri_axis,
            epsilon_floor,
        }) => commands::extract_histogram(
            &ctx,
            &commands::HistogramArgs {
                input,
                output,
                bins,
                range,
                range_from,
                tri_axis,
                epsilon_floor,
            },
        ),
        Command::Extract(ExtractCmd::Concat { inputs, output }) => {
            commands::extract_concat(&ctx, &inputs, &output)
        }
        Command::Project(a) => commands::project(
            &ctx,
            &commands::ProjectArgs {
                input: a.input,
                train_frac: a.train_frac,
                svg: a.svg,
                csv: a.csv,
                alpha: a.alpha,
                ridge: a.ridge,
            },
        ),
    }
}

/// Caps the global rayon pool at `CDTKIT_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CDTKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| error::CliError::input(format!("CDTKIT_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| error::CliError::input(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cdtkit: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
