//! Command-line front end for the `rplu` toolkit.

pub mod commands;
pub mod methods;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use methods::Access;

#[derive(Debug, Parser)]
#[command(name = "rplu", version, about = "Randomly pivoted LU, CUR and rational approximation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm from a JSON RunConfig or from flags.
    Approx(ApproxArgs),
    /// Error-vs-rank sweep over methods, ranks and trials.
    Sweep(SweepArgs),
    /// Run the theory suites and report measured margins.
    TheoryCheck(TheoryArgs),
    /// Structured elimination of a Cauchy-like matrix.
    Cauchy(CauchyArgs),
    /// Rational approximation with AAA or CUR-AAA.
    Aaa(AaaArgs),
    /// Preconditioned GMRES on a 1-D integro-differential problem.
    PrecondDemo(PrecondArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Base seed; trials use seed XOR trial index.
    #[arg(long, env = "RPLU_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// JSON RunConfig file.
    #[arg(long, conflicts_with_all = ["algorithm", "input", "rank", "tol", "nu", "leaf_size"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub algorithm: Option<String>,
    /// File path or `family:key=value,...` generator spec.
    #[arg(long, required_unless_present = "config")]
    pub input: Option<String>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed; overrides the config file's seed when given.
    #[arg(long, env = "RPLU_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub leaf_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = Access::Full)]
    pub access: Access,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// File path or `family:key=value,...` generator spec.
    #[arg(long)]
    pub input: String,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// `a..b` (inclusive), a single rank, or a comma list.
    #[arg(long)]
    pub ranks: String,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_enum, default_value_t = Access::Full)]
    pub access: Access,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Run one suite: doubling, gram, srplu or phi.
    #[arg(long)]
    pub suite: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CauchyArgs {
    /// Points CSV (`set,re,im`).
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub points: Option<PathBuf>,
    /// Cauchy generator spec instead of a points file.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, default_value = "rplu")]
    pub rule: String,
    #[arg(long, default_value_t = rplu::cauchy::DEFAULT_NU)]
    pub nu: f64,
    #[arg(long, default_value_t = rplu::tree::DEFAULT_LEAF_SIZE)]
    pub leaf_size: usize,
    /// Relative Frobenius residual at which elimination stops.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Step cap; defaults to min(n, m).
    #[arg(long)]
    pub rank: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step pivots CSV.
    #[arg(long)]
    pub pivots: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AaaArgs {
    /// Samples CSV (`z_re,z_im,f_re,f_im`).
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub samples: Option<PathBuf>,
    /// `loewner-samples:...` generator spec instead of a file.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    /// aaa, cur-rplu, cur-c2plu or all.
    #[arg(long, default_value = "aaa")]
    pub method: String,
    /// Fraction of samples held out for the holdout error.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = rplu::cauchy::DEFAULT_NU)]
    pub nu: f64,
    #[arg(long, default_value_t = rplu::tree::DEFAULT_LEAF_SIZE)]
    pub leaf_size: usize,
    #[arg(long, default_value_t = 200)]
    pub max_degree: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interpolant dump CSV (support, weight, value triples).
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecondArgs {
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub rank: usize,
    /// rplu or c2plu.
    #[arg(long, default_value = "rplu")]
    pub rule: String,
    #[arg(long, default_value_t = 320.0)]
    pub span: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 5.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 20)]
    pub restart: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_restarts: usize,
    /// Also compare the SMW apply with a dense inverse.
    #[arg(long)]
    pub check_dense: bool,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Residual histories CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

/// Parses `args` and runs the command. Exit code 1 signals an error or a
/// failed suite; usage errors exit with clap's code 2.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
