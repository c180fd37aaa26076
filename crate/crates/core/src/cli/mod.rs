//! Command-line front end.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{parse_compare, CommandOutput};
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "qcopies",
    version,
    about = "Copy allocation, simulation and verification for cat-state fidelity estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal copies per measurement setting for a ΔF bound.
    Allocate(AllocateArgs),
    /// Monte Carlo histogram of fidelity estimates; optionally against a baseline allocation.
    Simulate(SimulateArgs),
    /// Multi-round feedback protocol, or a sweep over ε ratios.
    Adaptive(AdaptiveArgs),
    /// Hoeffding failure bounds, allocation intervals and coverage runs.
    Hoeffding(HoeffdingArgs),
    /// Reconstruction quality against the number of Pauli POVM elements.
    Tomography(TomographyArgs),
    /// Time to collect ten-photon copies from an eight-photon rate.
    TenphotonCost(TenPhotonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed (falls back to the config file, then QCOPIES_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for CSV/JSON artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    /// Qubit count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Fidelity of a white-noise-mixed cat state.
    #[arg(long)]
    pub fidelity: Option<f64>,
    /// Density matrix JSON file ({"n", "re", "im"}).
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Setting probabilities P1..P(n+1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p: Option<Vec<f64>>,
    /// Raw variance weights for a generic budget problem.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub k: Option<Vec<f64>>,
    /// Standard-deviation bound ε0.
    #[arg(long)]
    pub epsilon0: Option<f64>,
    /// Squared bound ε = ε0².
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Baseline allocation: `uniform:<copies>`, `fixed:<t1>,<t2>,...` or `experiment`.
    #[arg(long)]
    pub compare: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptiveArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// `start:ratio:final` or a comma-separated decreasing list of ε values.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Round-0 copies (one value for all settings or one per setting).
    #[arg(long, value_delimiter = ',')]
    pub t_initial: Option<Vec<u64>>,
    /// `half`, `target` or a comma-separated list.
    #[arg(long)]
    pub initial_p: Option<String>,
    /// Sweep these ε ratios instead of a single run.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Copies per hour for the timeline.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Hours per setting switch for the timeline.
    #[arg(long)]
    pub switch_cost: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HoeffdingArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Per-setting deviation bound.
    #[arg(long)]
    pub h: Option<f64>,
    /// Target failure probability.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Copies per setting (bound mode) or copy counts to sweep (coverage mode).
    #[arg(long, value_delimiter = ',')]
    pub copies: Option<Vec<u64>>,
    /// Point estimates P1..P(n+1) for the allocation interval.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    /// Run the coverage simulation.
    #[arg(long)]
    pub coverage: bool,
    /// Setting-1 probability of the simulated state when no fidelity is given.
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TomographyArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Copies per Pauli setting.
    #[arg(long)]
    pub copies: Option<u64>,
    /// POVM element counts to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub elements: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TenPhotonArgs {
    /// Eight-photon coincidence rate in Hz.
    #[arg(long)]
    pub rate8: Option<f64>,
    #[arg(long)]
    pub copies: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 2 for usage or configuration errors, 3 for numerical ones.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::execute(&cli.command) {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(output.stdout.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
