mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scr_core::{MaskMode, ScrError};

#[derive(Parser)]
#[command(name = "scr", version, about = "Selective latent image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode an image into a .scr bitstream.
    Encode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        /// Quality level in [1, N]; fractional values interpolate.
        #[arg(short, long)]
        quality: f64,
        /// det, stoch:SEED, 2d or full.
        #[arg(long, default_value = "det")]
        mask_mode: MaskMode,
        /// Code latents with zero-mean Gaussians.
        #[arg(long)]
        zero_mean: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a .scr bitstream to PNG or PPM.
    Decode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Original image, for PSNR.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Time decoding per quality level against the full-mask control.
    Bench {
        #[arg(short, long)]
        weights: PathBuf,
        /// Corpus images; synthetic images are used when none are given.
        #[arg(short, long = "image")]
        images: Vec<PathBuf>,
        #[command(flatten)]
        synthetic: commands::SyntheticArgs,
        #[arg(short, long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        quality: Vec<f64>,
        #[arg(short, long, default_value_t = 10)]
        repetitions: usize,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Selection, rate and reuse analytics as CSV tables.
    Analyze {
        #[arg(short, long)]
        weights: PathBuf,
        #[arg(short, long = "image")]
        images: Vec<PathBuf>,
        #[command(flatten)]
        synthetic: commands::SyntheticArgs,
        /// Directory for rates.csv, reuse.csv, correlation.csv and manifest.csv.
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Print the header of a .scr file.
    Inspect { file: PathBuf },
    /// Write the seeded reference weight container.
    Reference {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Codec(#[from] ScrError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Codec(ScrError::DigestMismatch) => 3,
            CliError::Codec(e) if e.is_format_error() => 2,
            _ => 1,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SCR_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| CliError::Usage(format!("SCR_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Encode {
            input,
            weights,
            quality,
            mask_mode,
            zero_mean,
            output,
        } => commands::encode(&input, &weights, quality, mask_mode, zero_mean, &output),
        Command::Decode {
            input,
            weights,
            output,
            reference,
        } => commands::decode(&input, &weights, &output, reference.as_deref()),
        Command::Bench {
            weights,
            images,
            synthetic,
            quality,
            repetitions,
            output,
        } => commands::bench(&weights, &images, &synthetic, &quality, repetitions, output.as_deref()),
        Command::Analyze {
            weights,
            images,
            synthetic,
            out_dir,
        } => commands::analyze(&weights, &images, &synthetic, &out_dir),
        Command::Inspect { file } => commands::inspect(&file),
        Command::Reference { output, seed } => commands::reference(&output, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
