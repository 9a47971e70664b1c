//! Command-line front end: fuse, evaluate, simulate and inspect paired
//! detection files.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 parse or validation error,
//! 3 scene pairing error, 4 numeric failure such as total conflict.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddfuse_core::matching::{MatchMetric, MatchStrategy};
use ddfuse_core::metrics::{EvalConfig, Interpolation};
use ddfuse_core::pipeline::FusionConfig;

use crate::commands::CurveOutputs;
use crate::config::CliConfig;
use crate::error::CliError;
use crate::formats::BoxFormat;

#[derive(Debug, Parser)]
#[command(name = "ddfuse", version, about = "Decision-level fusion of paired sensor detections")]
pub struct Cli {
    /// Seed for every random choice (simulate only).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON config with optional `fusion`, `eval` and `simulate` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse two sensors' detection files into one
    Fuse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Score detections against ground truth
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        /// Also write the report JSON here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long, value_enum)]
        interp: Option<InterpArg>,
        #[arg(long)]
        pr_csv: Option<PathBuf>,
        #[arg(long)]
        pr_svg: Option<PathBuf>,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Generate a synthetic paired dataset
    Simulate {
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the configured scene count
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Print per-scene score matrices and assignments
    Match {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Weighted evidence combination of inline masses, e.g. "0.9,0.1;0.8,0.2"
    DsCombine {
        masses: String,
        /// Comma-separated hypothesis names
        #[arg(long)]
        labels: Option<String>,
    },
    /// Render a saved report's PR curve
    PrCurve {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Read boxes as pixel corners [x1, y1, x2, y2]
    #[arg(long)]
    pub pixel_coords: bool,
}

impl InputArgs {
    fn format(&self) -> BoxFormat {
        if self.pixel_coords {
            BoxFormat::PixelCorners
        } else {
            BoxFormat::Normalized
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Match threshold on the chosen metric
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
}

impl MatchArgs {
    fn apply(&self, mut cfg: FusionConfig) -> Result<FusionConfig, CliError> {
        if let Some(t) = self.threshold {
            cfg.match_threshold = t;
        }
        if let Some(m) = self.metric {
            cfg.match_metric = match m {
                MetricArg::Ddiou => MatchMetric::Ddiou,
                MetricArg::Iou => MatchMetric::Iou,
                MetricArg::Euclid => MatchMetric::Euclid,
            };
        }
        if let Some(s) = self.strategy {
            cfg.match_strategy = match s {
                StrategyArg::Optimal => MatchStrategy::Optimal,
                StrategyArg::Greedy => MatchStrategy::Greedy,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Ddiou,
    Iou,
    Euclid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Optimal,
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterpArg {
    All,
    #[value(name = "11pt")]
    ElevenPoint,
}

/// Runs a parsed command line, writing normal output and diagnostics to the
/// given streams.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = CliConfig::load(cli.config.as_deref())?;
    let workers = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    match cli.command {
        Command::Fuse {
            a,
            b,
            out,
            input,
            matching,
        } => {
            let fusion = matching.apply(cfg.fusion)?;
            commands::cmd_fuse(&a, &b, &out, input.format(), &fusion, workers, stderr)
        }
        Command::Eval {
            dets,
            gts,
            out,
            iou_threshold,
            interp,
            pr_csv,
            pr_svg,
            input,
        } => {
            let eval = EvalConfig {
                iou_threshold: iou_threshold.unwrap_or(cfg.eval.iou_threshold),
                interpolation: match interp {
                    Some(InterpArg::All) => Interpolation::AllPoints,
                    Some(InterpArg::ElevenPoint) => Interpolation::ElevenPoint,
                    None => cfg.eval.interp,
                },
            };
            let curves = CurveOutputs {
                csv: pr_csv.as_deref(),
                svg: pr_svg.as_deref(),
            };
            commands::cmd_eval(&dets, &gts, input.format(), &eval, out.as_deref(), &curves, stdout)
        }
        Command::Simulate { out_dir, scenes } => {
            let mut scenario = cfg.simulate;
            if let Some(seed) = cli.seed {
                scenario.seed = seed;
            }
            if let Some(n) = scenes {
                scenario.scenes = n;
            }
            commands::cmd_simulate(&scenario, &out_dir, workers, stderr)
        }
        Command::Match {
            a,
            b,
            input,
            matching,
        } => {
            let fusion = matching.apply(cfg.fusion)?;
            commands::cmd_match(&a, &b, input.format(), &fusion, stdout)
        }
        Command::DsCombine { masses, labels } => {
            commands::cmd_ds_combine(&masses, labels.as_deref(), stdout)
        }
        Command::PrCurve { report, csv, svg } => {
            let curves = CurveOutputs {
                csv: csv.as_deref(),
                svg: svg.as_deref(),
            };
            commands::cmd_pr_curve(&report, &curves, stdout)
        }
    }
}

/// Parses `args` and runs them, returning the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match run(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
