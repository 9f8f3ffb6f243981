use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "osa", version, about = "Subspace approximation with outliers")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted instance: points CSV plus truth JSON.
    Gen(GenArgs),
    /// Fit a k-subspace to a points CSV.
    Solve(SolveArgs),
    /// Exact optimum at small scale.
    Oracle(OracleArgs),
    /// Trimmed cost of a given basis on a points CSV.
    Eval(EvalArgs),
    /// Sweep a parameter grid on planted instances.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Inlier noise scale off the planted subspace.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Outlier model `name[:scale]` (scale defaults to 10): `uniform-far`
    /// (random direction, radius in [scale, 2 scale)), `clustered` (one
    /// Gaussian blob of spread scale/10 at distance scale) or `adversarial`
    /// (a second random k-subspace, coefficients of deviation scale).
    #[arg(long, default_value = "uniform-far")]
    pub outliers: String,
    /// Override the outlier scale of `--outliers`.
    #[arg(long)]
    pub outlier_scale: Option<f64>,
    /// Shift everything by a random origin of this norm (affine instance).
    #[arg(long)]
    pub origin_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Points CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Truth JSON to write (default: stdout).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ProblemArgs {
    /// Points CSV, one point per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 0.3)]
    pub epsilon: f64,
    /// Default: min(0.1, 1 - alpha).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Draws per inner batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Candidates per round, each on its own derived seed.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// M-estimator loss: `lp:P`, `huber:T` or `tukey:T`.
    #[arg(long)]
    pub loss: Option<String>,
    /// Fit an affine subspace (p = 2 only).
    #[arg(long)]
    pub affine: bool,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the fitted basis as CSV, one vector per row.
    #[arg(long)]
    pub basis_out: Option<PathBuf>,
    /// Also write the affine origin as a one-row CSV.
    #[arg(long)]
    pub origin_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMethod {
    /// Enumeration when the subset count fits the budget, else branch and bound (p = 2).
    Auto,
    Enumerate,
    BranchBound,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = OracleMethod::Auto)]
    pub method: OracleMethod,
    #[arg(long, default_value_t = 5_000_000)]
    pub node_budget: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub basis_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Basis CSV, one vector per row; orthonormalized if needed.
    #[arg(long)]
    pub basis: PathBuf,
    /// One-row CSV with the affine origin.
    #[arg(long)]
    pub origin: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Evaluate a trimmed M-cost instead of the p-th power cost.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.25")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    pub epsilon: Vec<f64>,
    /// Default: min(0.1, 1 - alpha) for each alpha.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Trials per grid point.
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value = "uniform-far")]
    pub outliers: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subset budget below which the exact oracle is used as reference.
    #[arg(long, default_value_t = 1e5)]
    pub oracle_budget: f64,
    /// Long-format CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}
