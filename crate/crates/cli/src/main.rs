//! `rwnet`: simulate, fit and check random-walk network models from the shell.

mod commands;
mod output;
mod settings;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rwnet", version, about = "Random-walk network models: simulation, likelihood and particle MCMC")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Plain-text `key = value` file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(short, long, global = true)]
    pub output: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a graph from RW_U, RW_SB, ACL or ER.
    Generate(GenerateArgs),
    /// Size, diameter, path length and clustering of an edge list.
    Stats(StatsArgs),
    /// L2 mixing time of the simple random walk.
    MixingTime(MixingArgs),
    /// Maximum likelihood on a multigraph given in insertion order.
    Mle(MleArgs),
    /// SMC over insertion orders at fixed parameters.
    Bridge(BridgeArgs),
    /// Particle marginal Metropolis-Hastings.
    Pmmh(PmmhArgs),
    /// Particle Gibbs.
    Pg(PgArgs),
    /// Posterior predictive checks against a saved chain.
    Ppd(PpdArgs),
    /// Exact posterior over insertion orders of a small graph.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// Edge list: two labels per line, `#` comments.
    #[arg(short, long)]
    pub input: Option<String>,
    /// `simple` or `multigraph`.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Poisson rate of the extra walk steps.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Start-vertex selection: `uniform` or `size-biased`.
    #[arg(long)]
    pub selection: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ChainArgs {
    #[arg(long)]
    pub particles: Option<usize>,
    /// Retained samples after burn-in and thinning.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Beta prior on alpha as `a,b`.
    #[arg(long)]
    pub prior_alpha: Option<String>,
    /// Gamma prior on lambda as `shape,rate`.
    #[arg(long)]
    pub prior_lambda: Option<String>,
    /// `quick` (default) or `thorough` (1000 samples, thin 40, burn 1000).
    #[arg(long)]
    pub preset: Option<String>,
    /// Write retained insertion orders here.
    #[arg(long)]
    pub histories: Option<String>,
    /// Write a JSON chain summary here.
    #[arg(long)]
    pub summary: Option<String>,
    /// Also write every iteration, before burn-in and thinning, here.
    #[arg(long)]
    pub raw: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    /// `rw-u`, `rw-sb`, `acl` or `er`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub edges: Option<usize>,
    /// Vertex count, ER only.
    #[arg(long)]
    pub vertices: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Include degree, shared-partner and geodesic counts.
    #[arg(long)]
    pub fit_stats: bool,
}

#[derive(Args, Debug, Clone)]
pub struct MixingArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub t_max: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct MleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub selection: Option<String>,
    /// Upper end of the lambda search bracket.
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Leave self-loop insertions out of the walk-step likelihood.
    #[arg(long)]
    pub no_self_loops: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BridgeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub particles: Option<usize>,
    /// `multinomial` or `stratified`.
    #[arg(long)]
    pub resampling: Option<String>,
    /// Write the sampled insertion orders here.
    #[arg(long)]
    pub histories: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct PmmhArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub selection: Option<String>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Proposal step on logit alpha.
    #[arg(long)]
    pub step_alpha: Option<f64>,
    /// Proposal step on log lambda.
    #[arg(long)]
    pub step_lambda: Option<f64>,
    /// Adapt the proposal steps over this many initial iterations.
    #[arg(long)]
    pub adapt: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct PgArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub selection: Option<String>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// `marginal`, `augmented` or `collapsed`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Largest walk length the latent sampler considers.
    #[arg(long)]
    pub k_cap: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct PpdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Chain CSV written by `pmmh` or `pg`.
    #[arg(long)]
    pub chain: Option<String>,
    /// Comma-separated subset of `rw_u,rw_sb,acl,er`.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Write every draw's statistics as JSON here.
    #[arg(long)]
    pub json: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match commands::dispatch(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
