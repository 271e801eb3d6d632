use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ensemble-mdp", version, about = "Solve, track and simulate KL-penalized ensemble control problems")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Convergence tolerance: multiplier residual for `solve`, tracking
    /// residual for `track`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for generated costs and sampling; overrides the problem file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Force a solver instead of choosing by penalty variant.
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    /// Linear desirability recursion; one weight per time step.
    Linear,
    /// Log-sum-exp recursion; one weight per source state.
    Normalized,
    /// Per-column multiplier solve; any weights.
    General,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the cyclic load model as a problem file.
    GenModel(GenModelArgs),
    /// Solve a problem file.
    Solve {
        problem: PathBuf,
    },
    /// Find the cost multipliers that make consumption follow a signal.
    Track(TrackArgs),
    /// Sample devices from a solved transition schedule.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    /// One weight on every transition.
    Uniform,
    /// Off-cycle moves weighted more than moves along the cycle.
    Cycle,
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    /// Number of states on the ring (even).
    #[arg(long, default_value_t = 8)]
    pub states: usize,
    /// Probability of advancing one step along the ring.
    #[arg(long, default_value_t = 0.8)]
    pub advance_prob: f64,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = PenaltyArg::Cycle)]
    pub penalty: PenaltyArg,
    /// Cost level of the on-states before noise.
    #[arg(long, default_value_t = 1.0)]
    pub cost_base: f64,
    #[arg(long, default_value_t = 10.0)]
    pub gamma_off_cycle: f64,
    /// Weight along the cycle; also the uniform weight.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_on_cycle: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon_on: f64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon_off: f64,
    /// Weight the wrap-around transition like an off-cycle move.
    #[arg(long)]
    pub strict_paper_gamma: bool,
    /// Write every cost row instead of the seeded generator.
    #[arg(long)]
    pub explicit_costs: bool,
    /// Output path; defaults to `<out-dir>/problem.json`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpdateArg {
    Newton,
    Gradient,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    pub problem: PathBuf,
    /// CSV with header `t,s` and rows `t = 1..T`.
    pub signal: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, value_enum, default_value_t = UpdateArg::Newton)]
    pub update: UpdateArg,
    /// Initial step of the gradient update.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub problem: PathBuf,
    /// `p_traj.json` written by `solve` or `track`.
    pub p_traj: PathBuf,
    #[arg(long, short = 'n', default_value_t = 100_000)]
    pub devices: usize,
}
