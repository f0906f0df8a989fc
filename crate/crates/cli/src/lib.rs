//! Command-line front end: goal generation, extraction, experiments, replay,
//! fault seeding, report export and the session server.

pub mod commands;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "agentest", version, about = "Goal-driven tester agents for grid games")]
pub struct Cli {
    /// Directory for every file the command writes.
    #[arg(long, global = true, env = "AGENTEST_OUT", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic goal sequences from a game's scenario graph.
    GenGoals(GenGoalsArgs),
    /// Extract goal sequences from recorded trajectories.
    Extract(ExtractArgs),
    /// Write the scripted testers' trajectories.
    Testers(TestersArgs),
    /// Run a fault detection experiment.
    Run(RunArgs),
    /// Replay trajectories or persisted runs through the oracle.
    Replay(ReplayArgs),
    /// Seed faults into a game description.
    Mutate(MutateArgs),
    /// Export a stored report.
    Report(ReportArgs),
    /// Serve games for interactive trajectory recording.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoverageArg {
    Ec,
    Epc,
    Ppc,
    Apc,
}

#[derive(Debug, Args)]
pub struct GenGoalsArgs {
    /// Shipped game id or game directory.
    #[arg(long)]
    pub game: String,
    /// Levels to generate for; all when omitted.
    #[arg(long = "level")]
    pub levels: Vec<u32>,
    #[arg(long, value_enum, default_value = "apc")]
    pub coverage: CoverageArg,
    /// Skip modification insertion (the baseline).
    #[arg(long)]
    pub no_modifications: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub game: String,
    /// Trajectory file (one JSON record per line); the scripted testers when omitted.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// Likelihood thresholds.
    #[arg(long = "kappa", default_values_t = [0.0, 0.5, 1.0])]
    pub kappas: Vec<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TestersArgs {
    #[arg(long)]
    pub game: String,
    /// Tester names; all when omitted.
    #[arg(long = "tester")]
    pub testers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (TOML or JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "game")]
    pub games: Vec<String>,
    #[arg(long = "level")]
    pub levels: Vec<u32>,
    /// Cells as `synthetic:sarsa`, `baseline:mcts` or `human:<kappa>:<agent>`.
    #[arg(long = "cell")]
    pub cells: Vec<String>,
    #[arg(long = "tester")]
    pub testers: Vec<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-goal step caps to sweep.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Vec<usize>,
    #[arg(long)]
    pub mcts_iterations: Option<usize>,
    /// Keep testing a mutant after its first detection.
    #[arg(long)]
    pub all_sequences: bool,
    /// Persist every run's actions and verdicts.
    #[arg(long)]
    pub record_runs: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub game: String,
    /// Trajectory file to replay.
    #[arg(long, conflicts_with = "runs")]
    pub trajectory: Option<PathBuf>,
    /// Persisted runs to re-judge against their mutants.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Replay the trajectories against this seeded fault.
    #[arg(long, requires = "trajectory")]
    pub fault: Option<String>,
    /// Print every interaction.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct MutateArgs {
    #[arg(long)]
    pub game: String,
    /// Draw this many random faults instead of the shipped suite.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report written by `run`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "table-text")]
    pub format: agentest_core::harness::ReportFormat,
    /// Print to stdout instead of writing files.
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Games to offer; all shipped games when omitted.
    #[arg(long = "game")]
    pub games: Vec<String>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out;
    match cli.command {
        Command::GenGoals(a) => commands::gen_goals(&a, &out),
        Command::Extract(a) => commands::extract(&a, &out),
        Command::Testers(a) => commands::testers(&a, &out),
        Command::Run(a) => commands::run(&a, &out),
        Command::Replay(a) => commands::replay(&a),
        Command::Mutate(a) => commands::mutate(&a, &out),
        Command::Report(a) => commands::report(&a, &out),
        Command::Serve(a) => commands::serve(&a, &out),
    }
}
