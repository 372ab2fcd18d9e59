use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::sweep::{parse_a_range, parse_a_specs, parse_dims, ASpecs, Dims};

#[derive(Parser, Debug)]
#[command(name = "gfssm", version, about = "Seeded experiments for grouped FIR state space kernels")]
pub struct Cli {
    /// `key = value` file merged under the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Recurrent scan vs materialized form on random instances.
    #[command(name = "equiv-check", args_override_self = true)]
    EquivCheck(EquivArgs),
    /// Mask dynamic range and single- vs double-precision drift over a sweep.
    #[command(args_override_self = true)]
    Stability(StabilityArgs),
    /// Analytic backward pass vs central finite differences.
    #[command(name = "grad-check", args_override_self = true)]
    GradCheck(GradArgs),
    /// Train the toy recall model and write its loss curve.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Chunked streaming vs monolithic processing, including cache files.
    #[command(name = "stream-check", args_override_self = true)]
    StreamCheck(StreamArgs),
    /// Wall time of the scan and the materialized form across lengths.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted or `-`.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Worker threads for independent instances; output order is fixed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
}

#[derive(Args, Debug, Clone)]
pub struct Shape {
    /// Sequence length.
    #[arg(long = "T", default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub t: u64,
    /// Number of groups.
    #[arg(long = "Q", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    /// FIR filter order.
    #[arg(long = "n", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// State dimension.
    #[arg(long = "N", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    /// Channels.
    #[arg(long = "P", default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EquivArgs {
    #[command(flatten)]
    pub shape: Shape,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    /// Decays are drawn from `(lo, hi]`.
    #[arg(long = "a-range", default_value = "0..1", value_parser = parse_a_range)]
    pub a_range: (f64, f64),
    /// Max abs error allowed; 1e-12 in double and 1e-4 in single by default.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, env = "GFSSM_PRECISION", value_enum, default_value_t = Precision::Double)]
    pub precision: Precision,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct StabilityArgs {
    #[arg(long = "T", default_value = "256,1024", value_parser = parse_dims)]
    pub t: Dims,
    #[arg(long = "Q", default_value = "1,4", value_parser = parse_dims)]
    pub q: Dims,
    #[arg(long = "n", default_value = "4", value_parser = parse_dims)]
    pub n: Dims,
    /// Decay specs: a constant such as `0.9`, or `lo..hi` for seeded uniform draws.
    #[arg(long = "a", default_value = "0.9,0.99,0.999", value_parser = parse_a_specs)]
    pub a: ASpecs,
    #[arg(long = "N", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    #[arg(long = "P", default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    /// Allow decays above 1 (growing states).
    #[arg(long)]
    pub unconstrained: bool,
    /// Precision compared against the double-precision reference.
    #[arg(long, env = "GFSSM_PRECISION", value_enum, default_value_t = Precision::Single)]
    pub precision: Precision,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct GradArgs {
    #[arg(long = "T", default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pub t: u64,
    #[arg(long = "Q", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long = "n", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long = "N", default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    #[arg(long = "P", default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Max relative error allowed; 1e-5 in double and 1e-2 in single by default.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Precision of the analytic pass; differences always run in double.
    #[arg(long, env = "GFSSM_PRECISION", value_enum, default_value_t = Precision::Double)]
    pub precision: Precision,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    SelectiveCopy,
    DelayedRecall,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FirInitArg {
    Unit,
    Uniform,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = TaskArg::SelectiveCopy)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(3..))]
    pub vocab: u64,
    #[arg(long = "T", default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub t: u64,
    /// Data tokens to recall per sequence.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub recall: u64,
    #[arg(long = "Q", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long = "n", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long = "N", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    #[arg(long = "P", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long, default_value_t = 0.3)]
    pub lr: f64,
    /// Global gradient-norm clip.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long = "no-clip")]
    pub no_clip: bool,
    #[arg(long = "train-size", default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub train_size: u64,
    #[arg(long = "eval-size", default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_size: u64,
    /// Train the decays directly instead of through a sigmoid.
    #[arg(long = "raw-decay")]
    pub raw_decay: bool,
    #[arg(long = "init-decay", default_value_t = 0.95)]
    pub init_decay: f64,
    #[arg(long = "fir-init", value_enum, default_value_t = FirInitArg::Unit)]
    pub fir_init: FirInitArg,
    /// Seed of the training and evaluation sets; defaults to `--seed`.
    #[arg(long = "data-seed")]
    pub data_seed: Option<u64>,
    /// JSON metrics file; written to standard error when omitted.
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
    /// Fail unless final loss ≤ ratio × initial loss.
    #[arg(long = "max-ratio")]
    pub max_ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss-curve CSV; standard output when omitted or `-`.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct StreamArgs {
    #[arg(long = "T", default_value_t = 96, value_parser = clap::value_parser!(u64).range(1..))]
    pub t: u64,
    /// Chunk sizes to try.
    #[arg(long, default_value = "16", value_parser = parse_dims)]
    pub chunk: Dims,
    #[arg(long = "Q", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long = "n", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long = "N", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    #[arg(long = "P", default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    /// Scale of the random prompt bank.
    #[arg(long = "prompt-scale", default_value_t = 1.0)]
    pub prompt_scale: f64,
    /// Max abs error allowed; 1e-12 in double and 1e-4 in single by default.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Where the mid-sequence cache is written and read back; kept in
    /// memory when omitted. With several chunk sizes, `.chunk<c>.bin`
    /// replaces the extension for each.
    #[arg(long = "cache-file", value_name = "FILE")]
    pub cache_file: Option<PathBuf>,
    #[arg(long, env = "GFSSM_PRECISION", value_enum, default_value_t = Precision::Double)]
    pub precision: Precision,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long = "T", default_value = "64,256,1024", value_parser = parse_dims)]
    pub t: Dims,
    #[arg(long = "Q", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long = "n", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long = "N", default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    #[arg(long = "P", default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    /// Timed batches per point; the minimum and median are reported.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Minimum wall time of one batch, in milliseconds.
    #[arg(long = "min-ms", default_value_t = 20)]
    pub min_ms: u64,
    /// Fail unless the fitted exponents fall in the expected bands.
    #[arg(long)]
    pub check: bool,
    #[arg(long, env = "GFSSM_PRECISION", value_enum, default_value_t = Precision::Double)]
    pub precision: Precision,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
