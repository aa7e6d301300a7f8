//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use denobench_core::WidthScale;

use crate::config::{DataSource, ExperimentConfig, Preset};
use crate::error::{io_err, Result};
use crate::experiment::{run_experiment, RunOptions};
use crate::report::{read_summary_csv, render_markdown};
use crate::storage::{denoise_file, write_phantoms};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "DENOBENCH_OUT";

#[derive(Debug, Parser)]
#[command(name = "denobench", version, about = "Convolutional denoiser benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate every architecture at every noise level.
    Run(RunArgs),
    /// Denoise one image with a saved checkpoint.
    Denoise(DenoiseArgs),
    /// Write synthetic phantom images as PNG files.
    GenPhantoms(PhantomArgs),
    /// Render a summary CSV as a Markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: `full` (default) or `desk`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed-order, single-threaded kernels (always the case; recorded in the config).
    #[arg(long)]
    pub strict: bool,
    /// Image side length.
    #[arg(long)]
    pub size: Option<usize>,
    /// Channel width multiplier, e.g. `1/4`.
    #[arg(long)]
    pub width_scale: Option<WidthScale>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Use the images in this directory instead of phantoms.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Number of grid cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also write the clean and noisy images as `dataset.dnbd`.
    #[arg(long)]
    pub save_dataset: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Resize to this side length first (default: keep a square input's size).
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary CSV written by `run`.
    pub input: PathBuf,
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn default_out(fallback: &str) -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(fallback))
}

/// Resolves the configuration a `run` invocation describes.
pub fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name.parse::<Preset>()?),
        (None, None) => ExperimentConfig::preset(Preset::Full),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        if let DataSource::Phantoms { seed: s, .. } = &mut cfg.data {
            *s = seed;
        }
    }
    if args.strict {
        cfg.strict = true;
    }
    if let Some(size) = args.size {
        cfg.image_size = size;
    }
    if let Some(scale) = args.width_scale {
        cfg.width_scale = scale;
    }
    if let Some(epochs) = args.max_epochs {
        cfg.max_epochs = epochs;
        cfg.patience = cfg.patience.min(epochs);
    }
    if let Some(dir) = &args.data_dir {
        cfg.data = DataSource::Directory(dir.clone());
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// count as configuration errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

/// Runs a parsed command and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve_config(&args)?;
            let out_dir = cfg.output_dir.clone().unwrap_or_else(|| default_out("denobench-out"));
            let outcome = run_experiment(&cfg, &RunOptions { out_dir, jobs: args.jobs, save_dataset: args.save_dataset })?;
            print!("{}", render_markdown(&outcome.rows));
            if outcome.skipped_images > 0 {
                eprintln!("{} unreadable image(s) skipped", outcome.skipped_images);
            }
            for f in &outcome.failures {
                eprintln!("cell {} failed: {}", f.cell.name(), f.error);
            }
            eprintln!("results in {}", outcome.out_dir.display());
            Ok(if outcome.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Denoise(args) => {
            denoise_file(&args.checkpoint, &args.input, &args.output, args.size)?;
            Ok(EXIT_OK)
        }
        Command::GenPhantoms(args) => {
            let dir = args.out.unwrap_or_else(|| default_out("phantoms"));
            let paths = write_phantoms(&dir, args.count, args.size, args.seed)?;
            eprintln!("wrote {} phantoms to {}", paths.len(), dir.display());
            Ok(EXIT_OK)
        }
        Command::Report(args) => {
            let md = render_markdown(&read_summary_csv(&args.input)?);
            match args.output {
                Some(path) => std::fs::write(&path, md).map_err(io_err(path))?,
                None => print!("{}", md),
            }
            Ok(EXIT_OK)
        }
    }
}
