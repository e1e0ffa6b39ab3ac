//! `pairdecay` command-line tool.
//!
//! Rates are given in units of `gamma_0` and times in units of `tau_0`.
//! `--gamma0 G` accepts rates in physical units instead: rate flags are
//! divided by `G` and time flags multiplied by it before use.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 I/O, 4 input schema,
//! 5 solver or estimation failure, 6 regression mismatch (`paper-table`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_SCHEMA: u8 = 4;
pub const EXIT_SOLVER: u8 = 5;
pub const EXIT_MISMATCH: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "pairdecay", version, about = "Emission kinetics of initially entangled atom pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate emission events and write `events.csv` and `meta.json`.
    Simulate(SimulateArgs),
    /// Estimate rates and the lifetime from an event CSV.
    Analyze(AnalyzeArgs),
    /// Solve for the single-atom lifetime at given rates.
    SolveLifetime(SolveArgs),
    /// Lifetime as a function of the first-photon rate.
    Sweep(SweepArgs),
    /// Simulate, then analyze the generated events.
    Pipeline(SimulateArgs),
    /// Recompute the three reference lifetimes and check them.
    PaperTable(TableArgs),
}

#[derive(Debug, Clone, Args)]
struct RateArgs {
    #[arg(long, allow_negative_numbers = true)]
    gamma_f: f64,
    #[arg(long, allow_negative_numbers = true)]
    gamma_s: f64,
    /// Free-atom rate used to rescale rate and time flags.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    gamma0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Formation {
    Delta,
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, Args)]
struct DetectorArgs {
    /// Per-photon detection probability.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    efficiency: f64,
    /// Gaussian timing jitter per detected photon.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    jitter: f64,
    /// Formation-time profile around the nominal origin.
    #[arg(long, value_enum, default_value_t = Formation::Delta)]
    formation: Formation,
    /// Sigma (gaussian) or full width (uniform) of the formation profile.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    formation_width: f64,
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    /// Output directory, created if absent.
    #[arg(short, long, env = "PAIRDECAY_OUT", default_value = "out")]
    output: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Clone, Args)]
struct HistogramArgs {
    #[arg(long, default_value_t = pairdecay::estimation::DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    #[arg(long, default_value_t = pairdecay::estimation::DEFAULT_T_MAX)]
    t_max: f64,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct SimulateArgs {
    #[command(flatten)]
    rates: RateArgs,
    /// Number of pairs.
    #[arg(short, long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[command(flatten)]
    hist: HistogramArgs,
    /// Estimate from true rather than observed times (pipeline only).
    #[arg(long)]
    true_times: bool,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct AnalyzeArgs {
    /// Event CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Metadata sidecar; defaults to `meta.json` next to the input if present.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    true_times: bool,
    #[command(flatten)]
    out: OutputArgs,
    #[command(flatten)]
    hist: HistogramArgs,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct SolveArgs {
    #[command(flatten)]
    rates: RateArgs,
    /// Also write `lifetime.json` and `populations.csv` here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct SweepArgs {
    #[arg(long, default_value_t = 2.0)]
    gamma_s: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma_f_min: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma_f_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct TableArgs {
    /// Print a JSON array instead of a text table.
    #[arg(long)]
    json: bool,
    /// Allowed deviation from the two-decimal reference values.
    #[arg(long, default_value_t = 0.005)]
    tol: f64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub(crate) struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<pairdecay::Error> for Failure {
    fn from(e: pairdecay::Error) -> Self {
        use pairdecay::Error as E;
        let code = match &e {
            E::Domain(_) | E::InvalidParameter(_) => EXIT_INVALID,
            E::Io(_) | E::Json(_) => EXIT_IO,
            E::Schema { .. } => EXIT_SCHEMA,
            E::Consistency(_)
            | E::Integration(_)
            | E::NoSignChange { .. }
            | E::InsufficientData(_)
            | E::NonUniformBinning(_)
            | E::Fit(_) => EXIT_SOLVER,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_IO, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::SolveLifetime(a) => commands::solve(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
        Command::PaperTable(a) => commands::paper_table(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
