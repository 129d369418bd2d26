use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "dmpinn", version, about = "Train and evaluate densely multiplied PINNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one architecture over the configured seeds.
    Train(RunArgs),
    /// Train every listed architecture (and learning rate) on the same problem and seeds.
    Compare(RunArgs),
    /// Measure a saved parameter file against the reference solution.
    Evaluate(EvaluateArgs),
    /// Write the reference solution on the evaluation grid as CSV.
    Reference(ReferenceArgs),
    /// Write the collocation, initial and boundary points for a seed as CSV.
    Samples(SamplesArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment JSON file.
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    config_pos: Option<PathBuf>,
    #[arg(long, conflicts_with = "config_pos")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration count; replaces any time budget in the file.
    #[arg(long)]
    iters: Option<usize>,
    /// Learning rate; replaces any sweep in the file.
    #[arg(long)]
    lr: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for output directories when neither --out nor `out_dir` is given.
    #[arg(long, env = "DMPINN_OUT", default_value = "runs")]
    out_root: PathBuf,
}

impl RunArgs {
    fn config_path(&self) -> &Path {
        self.config_pos
            .as_deref()
            .or(self.config.as_deref())
            .expect("clap enforces a config path")
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Parameter file written by `train`.
    #[arg(long)]
    params: PathBuf,
    /// Problem to evaluate on; defaults to the one recorded in the file.
    #[arg(long)]
    problem: Option<String>,
    /// Grid as SPACExTIME, e.g. 256x101.
    #[arg(long)]
    grid: Option<String>,
    /// Error-field CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the reference itself as the prediction (harness self-check).
    #[arg(long)]
    reference_as_prediction: bool,
}

#[derive(Args, Debug)]
struct ReferenceArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SamplesArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a.into()),
        Command::Compare(a) => commands::compare(&a.into()),
        Command::Evaluate(a) => commands::evaluate(&commands::EvaluateRequest {
            params: a.params,
            problem: a.problem,
            grid: a.grid,
            out: a.out,
            reference_as_prediction: a.reference_as_prediction,
        }),
        Command::Reference(a) => commands::write_reference(&a.problem, a.grid.as_deref(), &a.out),
        Command::Samples(a) => commands::write_samples(&a.problem, a.seed, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<RunArgs> for commands::RunRequest {
    fn from(a: RunArgs) -> Self {
        Self {
            config: a.config_path().to_path_buf(),
            seed: a.seed,
            iters: a.iters,
            lr: a.lr,
            out: a.out,
            out_root: a.out_root,
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) | CliError::Run(_) => 1,
        }
    }
}
