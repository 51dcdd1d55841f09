mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use config::parse_pair;

#[derive(Parser, Debug)]
#[command(name = "riaft", version, about = "Random-intercept AFT BART for clustered survival data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for chains, permutations, bootstraps and replicates.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset from a simulation design.
    Simulate(SimulateArgs),
    /// Run the MCMC sampler and write posterior draws.
    Fit(FitArgs),
    /// Posterior predictions for the rows of a dataset.
    Predict(PredictArgs),
    /// Individual and average treatment effects.
    Iste(IsteArgs),
    /// Fit-the-fit subgroup discovery on the individual effects.
    Subgroups(SubgroupArgs),
    /// Permutation-based variable selection.
    Select(SelectArgs),
    /// Impose missing values on covariates.
    Ampute(AmputeArgs),
    /// Fill missing covariates by chained equations.
    Impute(ImputeArgs),
    /// Run a simulation scenario and write metric tables.
    Benchmark(BenchmarkArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ModeArg {
    Heterogeneity,
    Varselect,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SettingArg {
    A,
    B,
    C,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum HazardArg {
    Ph,
    Nph,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ExpansionArg {
    PerCluster,
    Global,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ChainArgs {
    /// Total iterations per chain, burn-in included.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Number of trees.
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, value_enum)]
    pub expansion: Option<ExpansionArg>,
    /// Heartbeat interval in iterations (needs -v to show).
    #[arg(long)]
    pub progress: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub setting: Option<SettingArg>,
    #[arg(long, value_enum)]
    pub hazard: Option<HazardArg>,
    /// Number of clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub cluster_size: Option<usize>,
    /// Target censoring proportion.
    #[arg(long)]
    pub censoring: Option<f64>,
    /// Remove all covariate signal.
    #[arg(long)]
    pub null_signal: bool,
    /// Skip the truth sidecar.
    #[arg(long)]
    pub no_oracle: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Persist every kept forest (needed for out-of-sample prediction).
    #[arg(long)]
    pub keep_forests: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ScaleArgs {
    /// Survival probability at this time instead of log time.
    #[arg(long, conflicts_with = "rmst")]
    pub survival_t: Option<f64>,
    /// Restricted mean survival time up to this horizon.
    #[arg(long)]
    pub rmst: Option<f64>,
    /// Integrate the cluster intercept out instead of using the row's cluster.
    #[arg(long)]
    pub integrated: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predict every row under this arm (1-based).
    #[arg(long)]
    pub arm: Option<usize>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Args, Debug)]
pub struct IsteArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Arm pair `a,b` (1-based); repeatable. Defaults to every pair.
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<(usize, usize)>,
    /// Predict from the persisted forests rather than the stored
    /// counterfactuals of the training rows.
    #[arg(long)]
    pub out_of_sample: bool,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Args, Debug)]
pub struct SubgroupArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<(usize, usize)>,
    #[arg(long)]
    pub out_of_sample: bool,
    /// Minimum R^2 gain to add a covariate.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub forest_trees: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Permuted-outcome runs for the null.
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub null_draws: Option<usize>,
    #[arg(long)]
    pub null_burn_in: Option<usize>,
    #[arg(long)]
    pub null_trees: Option<usize>,
    /// Bootstrap-imputed datasets (required when covariates are missing).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Selection fraction across bootstrap datasets.
    #[arg(long)]
    pub pi: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AmputeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Share of rows made incomplete.
    #[arg(long)]
    pub missingness: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub donors: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[command(flatten)]
    pub chain: ChainArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(j) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("building the worker pool")?;
    }
    let cfg = config::RunConfig::load(cli.common.config.as_deref())?;
    let c = &cli.common;
    match cli.command {
        Command::Simulate(a) => commands::simulate(c, cfg, a),
        Command::Fit(a) => commands::fit(c, cfg, a),
        Command::Predict(a) => commands::predict(c, cfg, a),
        Command::Iste(a) => commands::iste(c, cfg, a),
        Command::Subgroups(a) => commands::subgroups(c, cfg, a),
        Command::Select(a) => commands::select(c, cfg, a),
        Command::Ampute(a) => commands::ampute(c, cfg, a),
        Command::Impute(a) => commands::impute(c, cfg, a),
        Command::Benchmark(a) => commands::benchmark(c, cfg, a),
    }
}
