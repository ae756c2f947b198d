//! Command-line front end for the `greenspace` analysis library.
//!
//! Each subcommand reads files, runs one pipeline stage and writes fixed-name
//! outputs plus a `<name>.meta.json` sidecar into `--out`.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use greenspace::ErrorKind;

pub use config::{GlobalArgs, Paths, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Core(greenspace::Error),
    MissingInput(PathBuf),
    Usage(String),
}

impl CliError {
    pub fn input(path: &Path, e: std::io::Error) -> CliError {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(path.to_path_buf())
        } else {
            CliError::Core(e.into())
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Usage(_) => 4,
            CliError::Core(e) => match e.kind() {
                ErrorKind::MissingInput => 2,
                ErrorKind::EmptyPool => 3,
                ErrorKind::Validation => 4,
                ErrorKind::Other => 1,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::MissingInput(_) => "missing_input",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": {"code": self.code(), "exit_code": self.exit_code(), "message": self.to_string()}})
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::MissingInput(p) => write!(f, "input not found: {}", p.display()),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<greenspace::Error> for CliError {
    fn from(e: greenspace::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "greenspace",
    version,
    about = "Park-exposure sentiment and vegetation pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DurationVariant {
    /// Secondary in-park messages count toward post-exposure bins.
    With,
    /// Secondary in-park messages are dropped from post-exposure bins.
    Without,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, deduplicate and normalize a raw message file -> corpus.jsonl
    Ingest {
        /// JSONL or CSV message file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Inclusive RFC 3339 start of the study window.
        #[arg(long)]
        start: Option<String>,
        /// Exclusive RFC 3339 end of the study window.
        #[arg(long)]
        end: Option<String>,
    },
    /// Tag messages with facilities and drop filtered users -> annotated.jsonl, stoplist.txt
    Join {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        facilities: Option<PathBuf>,
        /// Keep every user.
        #[arg(long)]
        no_user_filter: bool,
    },
    /// Detect exposures and assign relative-hour bins -> binned.json
    Bin {
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Bootstrapped sentiment for every bin -> curve.csv
    Curve {
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Exposure-bin minus baseline sentiment -> change.csv
    Change {
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Also report the estimate at these run counts -> change_convergence.csv
        #[arg(long, value_delimiter = ',', num_args = 0..=1, default_missing_value = "50,100,200")]
        convergence: Vec<usize>,
    },
    /// Hours of elevated sentiment after exposure -> duration.csv
    Duration {
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long, value_enum, default_value_t = DurationVariant::Both)]
        variant: DurationVariant,
    },
    /// Per-word contributions, exposure bin against baseline -> shift.csv
    Shift {
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Smoothed relative frequency of words by bin -> series.csv
    Series {
        #[arg(long)]
        binned: Option<PathBuf>,
        /// Word to track; repeat for several.
        #[arg(long = "word", required = true)]
        words: Vec<String>,
        /// Odd moving-average width in bins.
        #[arg(long)]
        smoothing: Option<usize>,
        /// Bins on each side of exposure.
        #[arg(long)]
        span: Option<i64>,
    },
    /// NDVI statistics per facility -> veg_stats.csv
    Veg {
        /// Raster header JSON.
        #[arg(long)]
        raster: Option<PathBuf>,
        #[arg(long)]
        facilities: Option<PathBuf>,
        /// GeoJSON water polygons.
        #[arg(long)]
        water: Option<PathBuf>,
    },
    /// Per-category facility summary -> report.csv
    Report {
        /// veg_stats.csv from `veg`.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        facilities: Option<PathBuf>,
    },
    /// Generate a synthetic scenario with ground truth
    Synth {
        /// Scenario JSON; defaults to the built-in scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        /// Plant no sentiment effect at all.
        #[arg(long)]
        null: bool,
    },
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ScoringArgs {
    /// binned.json from `bin`.
    #[arg(long)]
    pub binned: Option<PathBuf>,
    /// Word scores, `word<TAB>score` or `word,score`.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Words to drop from the lexicon, one per line.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

impl ScoringArgs {
    fn paths(&self) -> Paths {
        Paths {
            binned: self.binned.clone(),
            lexicon: self.lexicon.clone(),
            stoplist: self.stoplist.clone(),
            ..Paths::default()
        }
    }
}

/// Result of a successful invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    commands::dispatch(cli)
}

/// Parses a full argument list, program name first.
pub fn parse_args<I, T>(args: I) -> Result<Cli, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string().trim().to_string()))
}

/// Parses `args`, runs, and reports errors as JSON on stderr. Returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(out) => {
            for p in out.written {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
