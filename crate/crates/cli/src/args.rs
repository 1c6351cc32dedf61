//! Command-line argument declarations.

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fmt::Format;

/// Power, guaranteed power, and minimal sample size for balanced ANOVA
/// models with fixed and random factors.
///
/// Model formulas use factor letters A (the fixed factor under test),
/// B, C (crossed with or nested under A), and U, V (factors A is nested in);
/// `~` marks a random factor, `x` crosses, `>` nests, parentheses group.
#[derive(Debug, Parser)]
#[command(name = "anova-power", version, max_term_width = 100)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the catalogued classifications with their test geometry.
    Models(ModelsArgs),
    /// Exact or guaranteed (worst-case) power at a design.
    Power(PowerArgs),
    /// Minimal sample size meeting a power requirement.
    Size(SizeArgs),
    /// Monte Carlo rejection rate (quasi-F for the approximate models).
    Simulate(SimulateArgs),
    /// Guaranteed-power grid over b and c with n fixed.
    Surface(SurfaceArgs),
}

#[derive(Debug, Args)]
pub struct ModelsArgs {
    /// Show only models with at least one random factor.
    #[arg(long)]
    pub random_only: bool,
    /// Show the single catalog entry for this formula.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Model formula, e.g. "A > B~ > C~".
    #[arg(long)]
    pub model: String,
    /// Level counts, e.g. a=6,b=5,c=2.
    #[arg(long)]
    pub levels: String,
    /// Replicate count.
    #[arg(long)]
    pub n: u64,
    /// Type I risk.
    #[arg(long)]
    pub alpha: f64,
    /// Minimum detectable difference between the extreme A-effects.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Total standard deviation of the response (worst-case variance split).
    #[arg(long)]
    pub sigma_y: Option<f64>,
    /// Variance components, e.g. sbA=1/18,sgAB=1/9,se=1/6.
    #[arg(long)]
    pub components: Option<String>,
    /// Explicit A-effects (zero-margin, row-major); computes exact power.
    #[arg(long)]
    pub effects: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Integer,
    Real,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    /// Model formula.
    #[arg(long)]
    pub model: String,
    /// Level counts of A and of the fixed factors, e.g. a=6. Random-factor
    /// levels and n are searched.
    #[arg(long)]
    pub levels: String,
    /// Type I risk.
    #[arg(long)]
    pub alpha: f64,
    /// Required power.
    #[arg(long)]
    pub power_requirement: f64,
    /// Minimum detectable difference.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Total standard deviation of the response.
    #[arg(long)]
    pub sigma_y: Option<f64>,
    /// Variance components.
    #[arg(long)]
    pub components: Option<String>,
    /// Integer designs or the real-parameter relaxation.
    #[arg(long, value_enum, default_value_t = ModeArg::Integer)]
    pub mode: ModeArg,
    /// Lower bounds for searched parameters, e.g. b=2,n=3 (default 2).
    #[arg(long)]
    pub minima: Option<String>,
    /// Include the search trace in the output.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model formula.
    #[arg(long)]
    pub model: String,
    /// Level counts for every factor, e.g. a=6,b=2,c=2.
    #[arg(long)]
    pub levels: String,
    /// Replicate count.
    #[arg(long)]
    pub n: u64,
    /// Type I risk.
    #[arg(long)]
    pub alpha: f64,
    /// Variance components (families not listed count as zero).
    #[arg(long)]
    pub components: String,
    /// Explicit A-effects (zero-margin, row-major).
    #[arg(long)]
    pub effects: Option<String>,
    /// Use the least favorable effect configuration for --delta.
    #[arg(long)]
    pub extremal: bool,
    /// Minimum detectable difference (with --extremal).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 10_000)]
    pub replications: u64,
    /// RNG seed; replication i draws from stream (seed, i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare the quasi-F rate against the equivalent exact model's
    /// analytic power (needs the blocking interaction component at zero).
    #[arg(long)]
    pub check_equivalence: bool,
    /// Print dataset for this replication stream instead of simulating.
    #[arg(long)]
    pub dump_dataset: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Model formula (three factors with both B and C).
    #[arg(long)]
    pub model: String,
    /// Level counts of A and any factor not on the grid, e.g. a=6.
    #[arg(long)]
    pub levels: String,
    /// Grid ranges, e.g. b=2..25,c=2..25.
    #[arg(long)]
    pub grid: String,
    /// Replicate count (fixed over the grid).
    #[arg(long)]
    pub n: u64,
    /// Type I risk.
    #[arg(long)]
    pub alpha: f64,
    /// Minimum detectable difference.
    #[arg(long)]
    pub delta: f64,
    /// Variance components.
    #[arg(long)]
    pub components: String,
    /// Replications per simulated grid point.
    #[arg(long, default_value_t = 10_000)]
    pub replications: u64,
    /// RNG seed for simulated grid points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
