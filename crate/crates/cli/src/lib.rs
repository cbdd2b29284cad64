//! Command-line driver: dataset generation, training, evaluation and belief
//! inspection. `run` is the whole program minus process exit, so tests can
//! drive it in-process.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] kgalign_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(kgalign_core::Error::Numerical { .. }) => EXIT_NUMERICAL,
            CliError::Core(e) if e.is_data_error() => EXIT_DATA,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "kgalign", version = VERSION, about = "Multilingual knowledge-graph completion and alignment")]
pub struct Cli {
    /// Worker threads for belief refresh and evaluation (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multilingual dataset
    Generate(GenerateArgs),
    /// Train one model variant
    Train(TrainArgs),
    /// Evaluate a checkpoint
    Eval(EvalArgs),
    /// Dump relation beliefs computed from a checkpoint
    Beliefs(BeliefsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// key=value generator spec
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// key=value training config; omitted keys keep their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// one, union, jaccard, asymmetric or softAsymmetric (overrides the config)
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Config override, repeatable: --set epochs=10
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Train-triple count splitting frequent from rare relations in the RA report
    #[arg(long, default_value_t = kgalign_core::eval::DEFAULT_RA_BUCKET)]
    pub ra_bucket: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated subset of kgc,ea,ra
    #[arg(long, default_value = "kgc,ea,ra")]
    pub tasks: String,
    /// Fold to rank: dev or test
    #[arg(long, default_value = "test")]
    pub fold: String,
    /// Only (s, r, ?) queries
    #[arg(long)]
    pub tail_only: bool,
    /// Leave dev facts out of the filter set
    #[arg(long)]
    pub no_dev_filter: bool,
    /// Rank against every entity instead of the query language's
    #[arg(long)]
    pub global_candidates: bool,
    #[arg(long, default_value_t = kgalign_core::eval::DEFAULT_RA_BUCKET)]
    pub ra_bucket: usize,
    /// Write per-query ranks here
    #[arg(long)]
    pub rank_dump: Option<PathBuf>,
    /// Directory for report.tsv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BeliefsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// jaccard, asymmetric or softAsymmetric (default: the checkpoint's variant, else asymmetric)
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, default_value_t = kgalign_core::signatures::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = kgalign_core::signatures::DEFAULT_MAX_PAIRS)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Generate(a) => commands::generate(&a).map(|l| println!("wrote dataset to {}", l.root.display())),
        Command::Train(a) => commands::train(&a).map(|s| println!("{}", s.dev_report)),
        Command::Eval(a) => commands::eval(&a).map(|r| println!("{r}")),
        Command::Beliefs(a) => commands::beliefs(&a),
    })
}

/// Parses `argv`, runs, reports errors on stderr and returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
