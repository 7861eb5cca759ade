//! `tnt` — convert floating-point weight containers to ternary/binary
//! models, run similarity experiments, and self-verify against the
//! brute-force oracle.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 input
//! error, 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tnt_core::experiments::{
    curve_experiment, dimension_sweep, export_curve_csv, export_sweep_csv, reference_limits,
    Distribution, ExperimentError,
};
use tnt_core::pipeline::{
    load_container, quantize_model, verify_compression, write_quantized, ConversionReport,
    PipelineError, QuantizeConfig, ScalarMode,
};
use tnt_core::tensor::DecomposeStrategy;
use tnt_core::ternary::{Mode, TernaryError};
use tnt_core::verify::{corrupted_pack, run_with_packer, VerifyOptions};

/// Fixed default seed so bare invocations are reproducible.
const DEFAULT_SEED: u64 = 42;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tnt",
    version,
    about = "Ternary/binary weight quantization by cosine-similarity search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a .npy/.npz weight container into a .tnt model.
    Quantize(QuantizeArgs),
    /// Similarity-statistics experiments with reproducible seeds.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Run the self-check suite (oracle equivalence, scalar ordering,
    /// pack round-trips).
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ternary,
    Binary,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ternary => Mode::Ternary,
            ModeArg::Binary => Mode::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalarsArg {
    None,
    Single,
    Dual,
}

impl From<ScalarsArg> for ScalarMode {
    fn from(s: ScalarsArg) -> Self {
        match s {
            ScalarsArg::None => ScalarMode::None,
            ScalarsArg::Single => ScalarMode::Single,
            ScalarsArg::Dual => ScalarMode::Dual,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Channel,
    Row,
    Flat,
}

impl From<StrategyArg> for DecomposeStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Channel => DecomposeStrategy::ChannelWise,
            StrategyArg::Row => DecomposeStrategy::RowWise,
            StrategyArg::Flat => DecomposeStrategy::Flat,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Normal,
}

impl From<DistArg> for Distribution {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Uniform => Distribution::UniformSymmetric,
            DistArg::Normal => Distribution::StandardNormal,
        }
    }
}

#[derive(Args)]
struct QuantizeArgs {
    /// Input tensor container (.npy or .npz).
    #[arg(long)]
    input: PathBuf,
    /// Output .tnt model path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "ternary")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "single")]
    scalars: ScalarsArg,
    /// Preferred decomposition; tensors of other ranks fall back to their
    /// structural default (4-dim channel, 2-dim row, else flat).
    #[arg(long, value_enum, default_value = "channel")]
    strategy: StrategyArg,
    /// Layer names to store verbatim, comma separated.
    #[arg(long, value_delimiter = ',')]
    skip: Vec<String>,
    /// Also quantize bias/1-dim tensors (skipped by default).
    #[arg(long)]
    include_biases: bool,
    /// Worker threads for per-vector quantization; never affects output
    /// bytes.
    #[arg(long, env = "TNT_JOBS")]
    jobs: Option<usize>,
    /// Write the conversion report to this path (.csv or .json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Full similarity curve s(1..N) of one random target vector.
    Curve {
        #[arg(long, value_enum)]
        dist: DistArg,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output CSV path (m,score rows).
        #[arg(long)]
        out: PathBuf,
    },
    /// Max-cosine statistics across dimensions and trials.
    Sweep {
        #[arg(long, value_enum, default_value = "uniform")]
        dist: DistArg,
        /// Sweep one mode; omit to sweep ternary and binary over the same
        /// vectors.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Ascending dimension list, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the four analytic large-N reference limits.
    Limits,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random vectors per (dimension, distribution) oracle cell.
    #[arg(long, default_value_t = 200)]
    oracle_trials: usize,
    /// Largest brute-force dimension (at most 12).
    #[arg(long, default_value_t = 10)]
    max_dim: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Fault injection for harness self-tests: route packing through a
    /// corrupting wrapper. The suite must then fail with a counterexample.
    #[arg(long, hide = true)]
    inject_pack_fault: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn pipeline_failure(err: PipelineError) -> Failure {
    let code = match &err {
        PipelineError::UnknownSkipLayer { .. } | PipelineError::InvalidConfig { .. } => EXIT_USAGE,
        PipelineError::Io(_)
        | PipelineError::Parse { .. }
        | PipelineError::UnsupportedDtype { .. }
        | PipelineError::VersionMismatch { .. }
        | PipelineError::NonFinite { .. }
        | PipelineError::UnknownLayer { .. }
        | PipelineError::Zip(_)
        | PipelineError::Tensor { .. } => EXIT_INPUT,
        _ => EXIT_INTERNAL,
    };
    Failure::new(code, err.to_string())
}

fn experiment_failure(err: ExperimentError) -> Failure {
    let code = match &err {
        ExperimentError::InvalidArgs { .. } => EXIT_USAGE,
        ExperimentError::Io(_) => EXIT_INPUT,
        ExperimentError::Ternary(_) => EXIT_INTERNAL,
    };
    Failure::new(code, err.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantize(args) => cmd_quantize(args),
        Command::Experiment(cmd) => cmd_experiment(cmd),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_quantize(args: QuantizeArgs) -> Result<(), Failure> {
    let container = load_container(&args.input).map_err(pipeline_failure)?;
    let mut config = QuantizeConfig {
        mode: args.mode.into(),
        scalars: args.scalars.into(),
        strategy: args.strategy.into(),
        skip_layers: args.skip,
        include_biases: args.include_biases,
        ..QuantizeConfig::default()
    };
    if let Some(jobs) = args.jobs {
        config.parallelism = jobs;
    }
    if let Some(report_path) = &args.report {
        let ok = report_path
            .extension()
            .is_some_and(|e| e == "csv" || e == "json");
        if !ok {
            return Err(Failure::new(
                EXIT_USAGE,
                format!(
                    "--report path {} must end in .csv or .json",
                    report_path.display()
                ),
            ));
        }
    }

    let (model, report) = quantize_model(&container, &config).map_err(pipeline_failure)?;
    write_quantized(&args.output, &model).map_err(pipeline_failure)?;
    print_summary(&report);
    println!("wrote {}", args.output.display());

    if let Some(report_path) = &args.report {
        if report_path.extension().is_some_and(|e| e == "csv") {
            report.write_csv(report_path).map_err(pipeline_failure)?;
        } else {
            report.write_json(report_path).map_err(pipeline_failure)?;
        }
        println!("report written to {}", report_path.display());
    }
    Ok(())
}

fn print_summary(report: &ConversionReport) {
    println!(
        "{:<14} {:>6} {:>9} {:>10} {:>10} {:>11} {:>11}",
        "layer", "role", "vectors", "mean cos", "min cos", "orig bytes", "ratio"
    );
    for l in &report.layers {
        let (mean, min) = match (l.mean_cosine, l.min_cosine) {
            (Some(a), Some(b)) => (format!("{a:.4}"), format!("{b:.4}")),
            _ => ("-".to_string(), "-".to_string()),
        };
        let ratio = if l.quantized {
            format!("{:.2}x", l.total_ratio())
        } else {
            "skipped".to_string()
        };
        println!(
            "{:<14} {:>6} {:>9} {:>10} {:>10} {:>11} {:>11}",
            l.name, l.role, l.vector_count, mean, min, l.original_bytes, ratio
        );
    }
    let t = &report.totals;
    println!(
        "total: {} parameters, {} -> {} bytes ({:.2}x), {} quantized / {} skipped layers, {:.2}s",
        t.parameter_count,
        t.original_bytes,
        t.packed_bytes,
        t.compression_ratio,
        t.quantized_layers,
        t.skipped_layers,
        t.wall_seconds
    );
    if t.degenerate_vectors > 0 {
        println!(
            "warning: {} all-zero vector(s) stored as zero code blocks",
            t.degenerate_vectors
        );
    }
    let check = verify_compression(report);
    let asserted = check.layers.iter().filter(|l| l.asserted).count();
    if asserted > 0 {
        println!(
            "code-stream compression: {} large f32 layer(s) at 15.9x-16.0x: {}",
            asserted,
            if check.passed { "ok" } else { "FAILED" }
        );
    }
}

fn cmd_experiment(cmd: ExperimentCommand) -> Result<(), Failure> {
    match cmd {
        ExperimentCommand::Curve {
            dist,
            dim,
            seed,
            out,
        } => {
            let outcome =
                curve_experiment(dist.into(), dim, seed).map_err(experiment_failure)?;
            export_curve_csv(&outcome.curve, &out).map_err(experiment_failure)?;
            println!(
                "dim {dim}, seed {seed}: max cosine {:.5} at m = {} (m/N = {:.5})",
                outcome.max_cosine,
                outcome.best_m,
                outcome.best_m as f64 / dim as f64
            );
            println!("curve written to {}", out.display());
            Ok(())
        }
        ExperimentCommand::Sweep {
            dist,
            mode,
            dims,
            trials,
            seed,
            out,
        } => {
            let modes: Vec<Mode> = match mode {
                Some(m) => vec![m.into()],
                None => vec![Mode::Ternary, Mode::Binary],
            };
            let mut merged = tnt_core::experiments::SweepResult {
                records: Vec::new(),
                summaries: Vec::new(),
            };
            for m in modes {
                let result = dimension_sweep(dist.into(), m, &dims, trials, seed)
                    .map_err(experiment_failure)?;
                for s in &result.summaries {
                    println!(
                        "{m} dim {:>8}: mean {:.5}, variance {:.3e} ({} trials)",
                        s.dimension, s.mean, s.variance, trials
                    );
                }
                merged.records.extend(result.records);
            }
            export_sweep_csv(&merged, &out).map_err(experiment_failure)?;
            println!(
                "{} records written to {}",
                merged.records.len(),
                out.display()
            );
            Ok(())
        }
        ExperimentCommand::Limits => {
            for (dist, mode, value) in reference_limits() {
                println!("{mode:<8} {dist:<8} {value:.5}");
            }
            Ok(())
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let options = VerifyOptions {
        oracle_trials: args.oracle_trials,
        max_dim: args.max_dim,
        seed: args.seed,
    };
    let pack = if args.inject_pack_fault {
        corrupted_pack as _
    } else {
        tnt_core::pipeline::pack_codes as _
    };
    let report = run_with_packer(&options, pack).map_err(|e| match e {
        TernaryError::DimensionTooLarge { .. } => Failure::new(EXIT_USAGE, e.to_string()),
        other => Failure::new(EXIT_INTERNAL, other.to_string()),
    })?;
    for c in &report.checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFY_FAILED, "verification failed"))
    }
}
