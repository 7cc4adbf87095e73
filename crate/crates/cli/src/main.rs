//! `isospec` command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 for malformed input, 2 when the
//! input lies outside the regime a construction needs (singular or
//! non-commuting data, divergent series, no closed-form measure), 3 when a
//! verification check fails.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Domain(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Domain(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Domain(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<isospec::Error> for Failure {
    fn from(e: isospec::Error) -> Self {
        if e.is_domain() {
            Failure::Domain(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "isospec",
    version,
    about = "Intertwined operators, biorthogonal families and bicoherent states",
    after_help = "Exit codes: 0 all checks pass, 1 input error, 2 regime/domain error, 3 verification failure.\n\
                  ISOSPEC_SEED sets the RNG seed when --seed is absent."
)]
struct Cli {
    /// JSON run configuration; flags given on the command line override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build Theta2 and the mapped eigensystem, write the model JSON
    Build(BuildArgs),
    /// Check every relation of a model and report residuals
    Verify(VerifyArgs),
    /// Sweep bicoherent states over a polar z-grid
    Coherent(CoherentArgs),
    /// Quantize the symbol z or zbar with the moment measure
    Quantize(QuantizeArgs),
    /// Worked-example fixtures
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// Random (Theta1, X) pair with [X X^H, Theta1] = 0
    Generate(GenerateArgs),
}

/// Where the model comes from. Exactly one of --model, --theta1/--x or
/// --fixture.
#[derive(Args, Debug, Default)]
pub struct SourceArgs {
    /// Model JSON written by `build`
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Theta1 as matrix JSON, or interleaved re,im CSV when the name ends in .csv
    #[arg(long, value_name = "FILE")]
    pub theta1: Option<PathBuf>,
    /// Intertwiner X: H2 -> H1, same formats as --theta1
    #[arg(long, value_name = "FILE")]
    pub x: Option<PathBuf>,
    /// Fixture id (see `fixture list`)
    #[arg(long)]
    pub fixture: Option<String>,
    /// Fixture parameters as name=value, comma separated; complex values like 1+2i
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Truncation size for infinite fixtures, at least 4 [default: 40]
    #[arg(long)]
    pub truncation: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct TolArgs {
    /// Relative singular-value threshold for kernels [default: 1e-10]
    #[arg(long)]
    pub kernel_tol: Option<f64>,
    /// Tolerance for preconditions and relation checks [default: 1e-9]
    #[arg(long)]
    pub relation_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Output file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Only check the leading block of this size
    #[arg(long)]
    pub interior: Option<usize>,
    /// Report file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CoherentArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Largest accepted ratio of consecutive normalization terms [default: 0.9]
    #[arg(long)]
    pub series_tail: Option<f64>,
    /// Series order [default: min(60, family size)]
    #[arg(long)]
    pub order: Option<usize>,
    /// 1, 2 or filtered [default: 1]
    #[arg(long)]
    pub level: Option<String>,
    /// Factorial convention of filtered states: original or relabeled [default: original]
    #[arg(long)]
    pub convention: Option<String>,
    /// Radial grid points, radius 0 and the maximum included [default: 20]
    #[arg(long)]
    pub radial: Option<usize>,
    /// Angular grid points [default: 16]
    #[arg(long)]
    pub angular: Option<usize>,
    /// Grid radius; must stay below the convergence radius [default: sqrt(2 e_1), capped at 0.9 rho]
    #[arg(long)]
    pub max_radius: Option<f64>,
    /// Gauss-Laguerre nodes for the moment measure [default: 64]
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Random (f, g) pairs for the resolution check [default: 50]
    #[arg(long)]
    pub pairs: Option<usize>,
    /// RNG seed for the resolution pairs [default: ISOSPEC_SEED, then the config seed, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: isospec-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    /// z or zbar [default: z]
    #[arg(long)]
    pub symbol: Option<String>,
    /// Number of basis vectors used [default: min(20, family size)]
    #[arg(long)]
    pub order: Option<usize>,
    /// Gauss-Laguerre nodes [default: 64]
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Write matrix JSON instead of CSV
    #[arg(long)]
    pub json: bool,
    /// Output file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FixtureCommand {
    /// List fixture ids, default parameters and descriptions
    List,
    /// Build a fixture and write its model JSON
    Build(FixtureBuildArgs),
}

#[derive(Args, Debug)]
pub struct FixtureBuildArgs {
    pub id: String,
    /// Parameters as name=value, comma separated
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Truncation size, at least 4 [default: 40]
    #[arg(long)]
    pub truncation: Option<usize>,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Output file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Dimension of H1
    #[arg(long)]
    pub dim1: Option<usize>,
    /// Dimension of H2, below dim1
    #[arg(long)]
    pub dim2: Option<usize>,
    /// Make Theta1 self-adjoint
    #[arg(long)]
    pub hermitian: bool,
    /// RNG seed [default: ISOSPEC_SEED, then the config seed, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for theta1.json and x.json [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Build(a) => commands::build(&a, &cfg),
        Command::Verify(a) => commands::verify(&a, &cfg),
        Command::Coherent(a) => commands::coherent(&a, &cfg),
        Command::Quantize(a) => commands::quantize(&a, &cfg),
        Command::Fixture(FixtureCommand::List) => commands::fixture_list(),
        Command::Fixture(FixtureCommand::Build(a)) => commands::fixture_build(&a, &cfg),
        Command::Generate(a) => commands::generate(&a, &cfg),
    }
}

fn main() -> ExitCode {
    // clap's own usage errors would exit with 2, which is reserved here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let kind = match f {
                Failure::Input(_) => "input error",
                Failure::Domain(_) => "domain error",
                Failure::Verification(_) => "verification failed",
            };
            eprintln!("isospec: {kind}: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
