use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "okl", version, about = "Budgeted online kernel learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a learner over seeded permutations of a dataset.
    Run(RunArgs),
    /// Kernel alignment A_T and the phase-switch round for a grid of σ.
    Alignment(AlignmentArgs),
    /// Budget-size bound check on synthetic kernel spectra.
    VerifyBudget(VerifyArgs),
    /// Online-to-batch conversion: test risk of a randomly selected hypothesis.
    Batch(BatchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Pomdr,
    Ogd,
    Fogd,
    Nogd,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Pomdr => "pomdr",
            Algo::Ogd => "ogd",
            Algo::Fogd => "fogd",
            Algo::Nogd => "nogd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Decay {
    Exp,
    Poly,
}

#[derive(Clone, Debug, Args)]
pub struct DataArgs {
    /// Dataset path, or a name looked up in $OKL_DATA_DIR (default `data/`).
    #[arg(long)]
    pub data: String,

    /// Input format; inferred from the file name when omitted.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,

    /// CSV label column (0-based).
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,

    /// CSV input starts with a header row.
    #[arg(long)]
    pub header: bool,

    /// Rescale every feature to [0, 1].
    #[arg(long)]
    pub scale: bool,
}

#[derive(Clone, Debug, Args)]
pub struct LearnerArgs {
    /// Gaussian kernel bandwidth.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,

    #[arg(long, default_value_t = 0.5)]
    pub zeta: f64,

    /// Budget B (even). Also the feature count for FOGD and landmark count for NOGD.
    #[arg(long = "B", default_value_t = 400)]
    pub budget: usize,

    /// Phase-switch budget size, or `auto` for ⌈15 ln T⌉.
    #[arg(long = "B0", default_value = "auto")]
    pub b0: String,

    /// Optimism window length.
    #[arg(long = "M", default_value_t = 15)]
    pub window: usize,

    /// Hypothesis ball radius.
    #[arg(long = "U", default_value_t = 25.0)]
    pub u: f64,

    /// Learning-rate multipliers c; every value is run and reported.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.1])]
    pub lr_scale: Vec<f64>,

    /// The ALD threshold is ald_scale · T^(−ζ).
    #[arg(long, default_value_t = 10.0)]
    pub ald_scale: f64,

    /// Recompute and check ‖f‖ every this many rounds (0 disables).
    #[arg(long, default_value_t = 500)]
    pub norm_check_every: usize,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = Algo::Pomdr)]
    pub algo: Algo,

    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub learner: LearnerArgs,

    /// Baseline stepsizes; defaults to 10^[-3..3]/√T.
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,

    /// Nyström rank for NOGD; defaults to 0.2·B.
    #[arg(long)]
    pub rank: Option<usize>,

    /// Number of seeded permutations.
    #[arg(long, default_value_t = 10)]
    pub perms: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Also compute the kernel alignment A_T (O(T²) kernel evaluations).
    #[arg(long)]
    pub alignment: bool,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub output_format: OutputFormat,

    /// Write zero wall times so repeated runs produce byte-identical files.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Clone, Debug, Args)]
pub struct AlignmentArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub learner: LearnerArgs,

    /// Kernel widths; defaults to 2^[-2..6].
    #[arg(long = "sigmas", value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,

    /// Permutations used for the phase-switch pass.
    #[arg(long, default_value_t = 1)]
    pub perms: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Rows per block in the A_T pass.
    #[arg(long, default_value_t = 1024)]
    pub chunk: usize,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub output_format: OutputFormat,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Decay::Exp)]
    pub decay: Decay,

    /// Exponential decay rates r ∈ (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
    pub r: Vec<f64>,

    /// Polynomial decay exponents p ≥ 1.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0])]
    pub p: Vec<f64>,

    /// Matrix sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![512])]
    pub n: Vec<usize>,

    /// Leading eigenvalue scale R0; defaults to n.
    #[arg(long)]
    pub r0: Option<f64>,

    /// α = D · n^(−2ζ) unless --alpha is given.
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,

    /// Absolute projection-error threshold α.
    #[arg(long)]
    pub alpha: Option<f64>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct BatchArgs {
    /// Training data, split by --split when --test is absent.
    #[command(flatten)]
    pub data: DataArgs,

    /// Held-out test set.
    #[arg(long)]
    pub test: Option<String>,

    /// Training fraction when splitting a single dataset.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,

    #[command(flatten)]
    pub learner: LearnerArgs,

    /// Number of r draws.
    #[arg(long, default_value_t = 5)]
    pub r_seeds: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}
