use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spac::{Method, PrecisionChoice, ResponseColumn};

#[derive(Debug, Parser)]
#[command(name = "spac", version, about = "Penalized regression on semi-standard partial covariances")]
pub struct Cli {
    /// Master seed; every random draw of the invocation derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, env = "SPAC_WORKERS")]
    pub workers: Option<usize>,

    /// Also write the primary result as CSV to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub out_csv: Option<PathBuf>,

    /// Do not print the run manifest on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a penalized regression to a CSV file.
    Fit(FitArgs),
    /// Run a Monte-Carlo comparison of the estimators.
    Simulate(SimulateArgs),
    /// Evaluate irrepresentable-type conditions for a correlation matrix.
    Check(CheckArgs),
    /// Print a structured correlation matrix.
    Gencov(GencovArgs),
    /// Estimate the diagonal of the precision matrix of a design.
    Precision(PrecisionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Lasso,
    Alasso,
    Scad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Auto,
    Sample,
    Ols,
    Sqrtlasso,
}

impl From<PrecisionArg> for PrecisionChoice {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Auto => PrecisionChoice::Auto,
            PrecisionArg::Sample => PrecisionChoice::Sample,
            PrecisionArg::Ols => PrecisionChoice::Ols,
            PrecisionArg::Sqrtlasso => PrecisionChoice::SqrtLasso,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file; the first row is a header when it is not numeric.
    pub file: PathBuf,

    /// Response column, by header name or zero-based index.
    #[arg(long, default_value = "y")]
    pub response: ResponseColumn,

    #[arg(long, value_enum, default_value_t = PenaltyArg::Lasso)]
    pub penalty: PenaltyArg,

    /// Penalize partial covariances (the default).
    #[arg(long, overrides_with = "no_spac")]
    pub spac: bool,

    /// Penalize the coefficients directly.
    #[arg(long)]
    pub no_spac: bool,

    /// Fit at this single lambda instead of tuning by BIC.
    #[arg(long, conflicts_with = "bic_path")]
    pub lambda: Option<f64>,

    /// Tune lambda by BIC over a warm-started path (the default).
    #[arg(long)]
    pub bic_path: bool,

    /// Number of lambda values on the path.
    #[arg(long, default_value_t = 100)]
    pub path_count: usize,

    /// SCAD shape parameter.
    #[arg(long, default_value_t = spac::penalty::DEFAULT_SCAD_A)]
    pub a: f64,

    /// Adaptive-Lasso weight exponent.
    #[arg(long, default_value_t = spac::penalty::DEFAULT_MU)]
    pub mu: f64,

    #[arg(long, value_enum, default_value_t = PrecisionArg::Auto)]
    pub precision: PrecisionArg,

    /// Square-root Lasso level for the precision estimate [default: sqrt(2 log p / n)]
    #[arg(long)]
    pub lambda_d: Option<f64>,

    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,

    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,

    /// Write the whole BIC path (lambda, df, bic) as CSV to this path.
    #[arg(long, value_name = "PATH")]
    pub path_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in setting 1-4, or a TOML configuration file.
    #[arg(long)]
    pub setting: String,

    /// Correlation triple a1,a2,a3 [default for built-in settings: 0.3,0.5,0.8]
    #[arg(long, value_parser = parse_triple)]
    pub alpha: Option<(f64, f64, f64)>,

    /// Common nonzero coefficient values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub beta_s: Vec<f64>,

    /// Grouped nonzero coefficients such as 0.8/1/2; may be repeated.
    #[arg(long)]
    pub beta_triple: Vec<String>,

    /// Replications per coefficient value [default: 100, or the file's value]
    #[arg(long)]
    pub reps: Option<usize>,

    /// Comma-separated methods, e.g. lasso,spac-lasso [default: all six]
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,

    /// Write one line per replication and method as CSV to this path.
    #[arg(long, value_name = "PATH")]
    pub per_rep_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorollaryArg {
    Exchangeable,
    Ar1,
    General,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// exchangeable, ar1, or a CSV file holding a correlation matrix.
    #[arg(long)]
    pub cov: String,

    #[arg(long, value_parser = parse_triple)]
    pub alpha: Option<(f64, f64, f64)>,

    /// Number of relevant covariates (the leading block).
    #[arg(long)]
    pub q: usize,

    /// Number of covariates; required for the structured matrices.
    #[arg(long)]
    pub p: Option<usize>,

    /// Signs of the relevant coefficients, comma separated [default: all +1]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub signs: Vec<f64>,

    /// Also evaluate a sufficient condition.
    #[arg(long, value_enum)]
    pub corollary: Option<CorollaryArg>,

    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,

    /// Lower bound L used by the exchangeable sufficient condition.
    #[arg(long, default_value_t = 1.0)]
    pub l_lower: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Exchangeable,
    Ar1,
    Random,
}

#[derive(Debug, Args)]
pub struct GencovArgs {
    #[arg(long, value_enum)]
    pub cov: CovArg,

    #[arg(long, value_parser = parse_triple)]
    pub alpha: Option<(f64, f64, f64)>,

    #[arg(long)]
    pub q: usize,

    #[arg(long)]
    pub p: usize,

    /// Range low,high of the uniform shift for the random structure.
    #[arg(long, value_parser = parse_pair, default_value = "1,2")]
    pub shift: (f64, f64),
}

#[derive(Debug, Args)]
pub struct PrecisionArgs {
    pub file: PathBuf,

    /// Response column to drop before estimating; every column is a predictor when omitted.
    #[arg(long)]
    pub response: Option<ResponseColumn>,

    #[arg(long, value_enum, default_value_t = PrecisionArg::Auto)]
    pub method: PrecisionArg,

    /// Square-root Lasso level [default: sqrt(2 log p / n)]
    #[arg(long)]
    pub lambda_d: Option<f64>,
}

fn parse_list(s: &str, len: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != len {
        return Err(format!("expected {len} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

pub fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_list(s, 3)?;
    Ok((v[0], v[1], v[2]))
}

pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_list(s, 2)?;
    Ok((v[0], v[1]))
}
