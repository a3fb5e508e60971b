mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgn_congestion::{Error, ErrorClass};

/// Routing congestion prediction on placed netlists.
///
/// Exit codes: 0 success, 1 usage error, 2 parse or validation error,
/// 3 numeric failure. Failures print one JSON object on standard error.
#[derive(Debug, Parser)]
#[command(name = "hgncong", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Settings file of `key = value` lines (dotted keys such as `model.hidden`).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Log progress to standard error (-vv for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a DEF or canonical design and emit canonical JSON lines.
    Ingest {
        /// Design file, or `-` for standard input.
        input: PathBuf,
        /// Master size library for DEF components without size properties.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
        /// Output file (standard output when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write standardized feature matrices with JSON sidecars here.
        #[arg(long, value_name = "DIR")]
        dump_features: Option<PathBuf>,
    },
    /// Generate a seeded synthetic placement.
    Synth {
        /// Number of cells.
        #[arg(long, default_value_t = 300)]
        cells: usize,
        /// Number of nets.
        #[arg(long, default_value_t = 330)]
        nets: usize,
        /// Number of Gaussian placement clusters.
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        /// Random seed; equal seeds give byte-identical output.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square die side in database units (sized for ~50% utilisation when omitted).
        #[arg(long)]
        die: Option<i64>,
        /// Design name (default `synth_s<seed>`).
        #[arg(long)]
        name: Option<String>,
        /// Output file (standard output when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute RUDY labels and write one label file per design.
    Label {
        /// Design files (DEF or canonical).
        #[arg(required = true)]
        designs: Vec<PathBuf>,
        /// Directory for the `<design>.labels` files.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Rasterize at this multiple of the target grid, then area-average down.
        #[arg(long, default_value_t = 1)]
        source_factor: usize,
        /// Write uncompressed values instead of normalized labels.
        #[arg(long)]
        raw: bool,
        /// Master size library for DEF inputs.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
    },
    /// Train on a split manifest; writes checkpoint, log and effective config.
    Train {
        /// Manifest of `train|val|test design [labels]` lines.
        #[arg(long, value_name = "FILE")]
        split: PathBuf,
        /// Directory for model.ckpt, train_log.jsonl, config.txt and summary.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Arithmetic precision for training; checkpoints always store f32.
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
        /// Master size library for DEF inputs.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and report MAE, RMSE, Pearson, Spearman and Kendall.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Designs to evaluate (alternative to --split).
        designs: Vec<PathBuf>,
        /// Label files matching the positional designs, in order.
        #[arg(long = "labels", value_name = "FILE")]
        labels: Vec<PathBuf>,
        /// Split manifest to take designs and labels from.
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Manifest split to evaluate.
        #[arg(long, default_value = "test")]
        subset: String,
        /// Directory for metrics.txt and metrics.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Master size library for DEF inputs.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
    },
    /// Write per-cell and per-tile predictions for one design.
    Predict {
        /// Checkpoint written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Design file (DEF or canonical).
        design: PathBuf,
        /// Directory for `<design>.cells.csv` and `<design>.grid.txt`.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Master size library for DEF inputs.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
    },
    /// Render a tile map (label file or grid text) as PGM, optionally PPM.
    Heatmap {
        /// Label file or `# grid m n` text file.
        input: PathBuf,
        /// Grayscale PGM output.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write a false-colour PPM.
        #[arg(long, value_name = "FILE")]
        ppm: Option<PathBuf>,
        /// Pixels per tile side.
        #[arg(long, default_value_t = 8)]
        scale: usize,
        /// Value range `LO:HI`, or `auto` for the data range.
        #[arg(long, default_value = "0:1")]
        range: String,
    },
    /// Print node/edge counts and degree histograms.
    GraphStats {
        /// Design file (DEF or canonical).
        design: PathBuf,
        /// Also write the statistics as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
        /// Master size library for DEF inputs.
        #[arg(long, value_name = "FILE")]
        lib: Option<PathBuf>,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Validation => 2,
        ErrorClass::Numeric => 3,
    }
}

fn report(class: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": { "class": class, "code": code, "message": message } });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = e.print();
            return report("usage", 1, first);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = match e.class() {
                ErrorClass::Usage => "usage",
                ErrorClass::Validation => "validation",
                ErrorClass::Numeric => "numeric",
            };
            report(class, exit_code(e.class()), &e.to_string())
        }
    }
}

pub fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
