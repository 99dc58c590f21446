//! sevkit: manifest preparation, training, evaluation, statistics, and
//! result grids for utterance-level speech severity assessment.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod chart;
mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sevkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a manifest and write a train/validation/test split plan.
    Prepare(PrepareArgs),
    /// Train a severity head under one of the idt/ft/jt paradigms.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Render run reports as a metrics grid.
    Report(ReportArgs),
    /// Score-level histogram for one dimension of a manifest.
    Stats(StatsArgs),
    /// Generate the bundled synthetic fixture (waveforms + manifests).
    Fixture(FixtureArgs),
    /// List the bundled encoder registry.
    Encoders,
}

#[derive(Args)]
struct PrepareArgs {
    /// Manifest file (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Annotation dimension the plan is built for.
    #[arg(long)]
    dimension: String,
    /// Utterances drawn from the train pool into validation.
    #[arg(long, default_value_t = 500)]
    validation_size: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Where the split plan is written.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParadigmArg {
    Idt,
    Ft,
    Jt,
}

#[derive(Args)]
struct TrainArgs {
    /// Configuration file mirroring every flag; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    paradigm: Option<ParadigmArg>,
    /// Encoder id from the registry (see `sevkit encoders`).
    #[arg(long)]
    encoder: Option<String>,
    /// Clinical (severity-scale) manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Clinical dimension to train on.
    #[arg(long)]
    dimension: Option<String>,
    /// Quality-corpus manifest (ft/jt).
    #[arg(long)]
    quali_manifest: Option<PathBuf>,
    /// Quality dimension used as auxiliary supervision (ft/jt).
    #[arg(long)]
    quali_dimension: Option<String>,
    /// JT sample size: `match`, `paper`, or a count.
    #[arg(long)]
    jt_size: Option<String>,
    /// Existing split plan for the clinical manifest; built on the fly
    /// from --validation-size/--seed when absent.
    #[arg(long)]
    sap_plan: Option<PathBuf>,
    /// Existing split plan for the quality manifest.
    #[arg(long)]
    quali_plan: Option<PathBuf>,
    #[arg(long)]
    validation_size: Option<usize>,
    #[arg(long)]
    quali_validation_size: Option<usize>,
    /// Directory of precomputed feature files (required for external encoders).
    #[arg(long)]
    features_dir: Option<PathBuf>,

    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    /// Stage-1 overrides for the ft paradigm.
    #[arg(long)]
    stage1_lr: Option<f64>,
    #[arg(long)]
    stage1_max_epochs: Option<usize>,
    #[arg(long)]
    stage1_patience: Option<usize>,
    #[arg(long)]
    stage1_seed: Option<u64>,

    /// Resume ft from an existing stage-1 checkpoint.
    #[arg(long)]
    stage1_checkpoint: Option<PathBuf>,
    /// Expected stage-1 parameter digest when resuming.
    #[arg(long)]
    stage1_digest: Option<String>,

    /// Run directory (must not exist). Defaults to <run root>/<run id>.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Root for default run directories.
    #[arg(long, env = "SEVKIT_RUN_ROOT", default_value = "runs")]
    run_root: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Which split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Split plan whose id sets define the split; manifest tags are used
    /// when absent.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Dimension to evaluate; defaults to the checkpoint's dimension.
    #[arg(long)]
    dimension: Option<String>,
    /// Directory of precomputed feature files (external encoders).
    #[arg(long)]
    features_dir: Option<PathBuf>,
    /// Where the run report (JSON) is written.
    #[arg(long)]
    report: PathBuf,
    /// Where per-utterance predictions (TSV) are written.
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Tsv,
}

#[derive(Args)]
struct ReportArgs {
    /// Run report files produced by `sevkit eval`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a generated-at line (unix seconds). Off by default so output
    /// digests are stable.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    dimension: String,
    /// Output file for the level<TAB>count table; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render an SVG bar chart here.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    /// Output directory for wav/, manifests, and fixture metadata.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2200)]
    sap_train: usize,
    #[arg(long, default_value_t = 200)]
    sap_test: usize,
    #[arg(long, default_value_t = 2200)]
    quali_train: usize,
    #[arg(long, default_value_t = 200)]
    quali_validation: usize,
    #[arg(long, default_value_t = 200)]
    quali_test: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value = "naturalness")]
    sap_dimension: String,
    #[arg(long, default_value = "overall_quality")]
    quali_dimension: String,
    /// Round clinical scores to integer levels (histogram demos).
    #[arg(long)]
    round_scores: bool,
}

/// Errors split by exit code: usage problems exit 2, data/runtime exit 1.
pub enum CliError {
    Usage(String),
    Data(sevkit::Error),
}

impl From<sevkit::Error> for CliError {
    fn from(e: sevkit::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() {
    // Behave like other unix filters when the read end of a pipe closes.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => commands::prepare(args),
        Command::Train(args) => commands::train(*args),
        Command::Eval(args) => commands::eval(args),
        Command::Report(args) => commands::report(args),
        Command::Stats(args) => commands::stats(args),
        Command::Fixture(args) => commands::fixture(args),
        Command::Encoders => commands::encoders(),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
        Err(CliError::Data(error)) => {
            eprintln!("error: {error}");
            std::process::exit(1);
        }
    }
}
