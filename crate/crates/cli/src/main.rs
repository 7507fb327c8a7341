//! `bdg`: data generation, training, evaluation and causal checks from the
//! command line. Every relative path resolves against `--workdir`.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bdg", version, about = "Backdoor-adjusted disentangled domain generalization")]
struct Cli {
    /// Base directory for relative paths.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset.
    GenData(GenDataArgs),
    /// Train one model and write its checkpoint and history.
    Train(TrainArgs),
    /// Leave-one-domain-out evaluation of one method.
    Lodo(LodoArgs),
    /// Select alpha and beta by mean validation accuracy.
    GridSearch(GridArgs),
    /// Compare ours, the baselines and the ablations over seeds.
    Eval(EvalArgs),
    /// Check the back-door criterion and P(Y|X) against P(Y|do(X)).
    CheckBackdoor(CheckArgs),
    /// Dump representations of a trained model with a 2-D PCA.
    ExportReps(ExportArgs),
    /// Ours against its three ablations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Generator config (TOML). Defaults to the hard preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainOpts {
    /// Dataset directory (or JSONL file).
    #[arg(long)]
    data: PathBuf,
    /// Training config (TOML). Defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Full,
    Erm,
    VariancePenalty,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
/// The branch an ablation removes.
enum Ablation {
    #[value(name = "w/o-invariant")]
    Invariant,
    #[value(name = "w/o-specific")]
    Specific,
    #[value(name = "w/o-both")]
    Both,
}

#[derive(Debug, Args)]
struct MethodOpts {
    /// Overrides the config's method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Disable loss terms of the full model.
    #[arg(long, value_enum)]
    ablate: Option<Ablation>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[command(flatten)]
    method: MethodOpts,
    /// Domain (name or index) to leave out and score on.
    #[arg(long)]
    held_out: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LodoArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[command(flatten)]
    method: MethodOpts,
    /// Report JSON path.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long, value_delimiter = ',', default_values_t = bdg_core::training::DEFAULT_GRID)]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = bdg_core::training::DEFAULT_GRID)]
    betas: Vec<f64>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    opts: TrainOpts,
    /// Training seeds; defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Defaults to the config's loss weights.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Variance-penalty weight; defaults to the config's.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    report: PathBuf,
    /// Also write representations of the first fold's full model on its
    /// held-out domain.
    #[arg(long)]
    reps: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Model in the line-oriented SCM text format.
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    adj: String,
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Restrict to one domain (name or index).
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ws = commands::Workspace::new(cli.workdir);
    let result: Result<(), CliError> = match cli.command {
        Command::GenData(a) => commands::gen_data(&ws, a),
        Command::Train(a) => commands::train(&ws, a),
        Command::Lodo(a) => commands::lodo(&ws, a),
        Command::GridSearch(a) => commands::grid(&ws, a),
        Command::Eval(a) => commands::eval(&ws, a),
        Command::CheckBackdoor(a) => commands::check_backdoor(&ws, a),
        Command::ExportReps(a) => commands::export_reps(&ws, a),
        Command::Ablate(a) => commands::ablate(&ws, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
