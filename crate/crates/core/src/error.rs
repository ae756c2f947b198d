use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// An input file could not be opened.
    MissingInput,
    /// The analysis pool was empty or had nothing to score.
    EmptyPool,
    /// Input data or configuration failed validation.
    Validation,
    /// Anything else (I/O failure mid-read, serialization).
    Other,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("duplicate word {word:?} on lines {first_line} and {second_line}")]
    DuplicateWord {
        word: String,
        first_line: u64,
        second_line: u64,
    },

    #[error("score {score} for {word:?} on line {line} is outside [1, 9]")]
    ScoreOutOfRange { word: String, score: f64, line: u64 },

    #[error("lexicon contains no entries")]
    EmptyLexicon,

    #[error("line {line}: {reason}")]
    InvalidRecord { line: u64, reason: String },

    #[error("degenerate ring with {distinct} distinct vertices (need at least 3)")]
    DegenerateRing { distinct: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("empty {what} (word count {words})")]
    EmptyPool { what: String, words: u64 },

    #[error("no lexicon-matched words; sentiment is undefined")]
    NoMatchedWords,

    #[error("all {runs} bootstrap runs were discarded for lack of matched words")]
    AllRunsDiscarded { runs: usize },

    #[error("reflectance must be finite and non-negative (nir {nir}, red {red})")]
    InvalidReflectance { nir: f64, red: f64 },

    #[error("facility {facility:?} covers no valid raster pixels")]
    NoValidPixels { facility: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("bin {bin}: shift {shift} exceeds the achievable range [{min}, {max}]")]
    InfeasibleTilt { bin: i64, shift: f64, min: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ErrorKind::MissingInput,
            Error::Io(_) => ErrorKind::Other,
            Error::EmptyPool { .. }
            | Error::NoMatchedWords
            | Error::AllRunsDiscarded { .. }
            | Error::NoValidPixels { .. } => ErrorKind::EmptyPool,
            Error::Json(_)
            | Error::Csv(_)
            | Error::DuplicateWord { .. }
            | Error::ScoreOutOfRange { .. }
            | Error::EmptyLexicon
            | Error::InvalidRecord { .. }
            | Error::DegenerateRing { .. }
            | Error::InvalidGeometry(_)
            | Error::InvalidReflectance { .. }
            | Error::InvalidRaster(_)
            | Error::InfeasibleTilt { .. }
            | Error::InvalidConfig(_) => ErrorKind::Validation,
        }
    }

    /// Short stable identifier for machine-readable error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::DuplicateWord { .. } => "duplicate_word",
            Error::ScoreOutOfRange { .. } => "score_out_of_range",
            Error::EmptyLexicon => "empty_lexicon",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::DegenerateRing { .. } => "degenerate_ring",
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::EmptyPool { .. } => "empty_pool",
            Error::NoMatchedWords => "no_matched_words",
            Error::AllRunsDiscarded { .. } => "all_runs_discarded",
            Error::InvalidReflectance { .. } => "invalid_reflectance",
            Error::NoValidPixels { .. } => "no_valid_pixels",
            Error::InvalidRaster(_) => "invalid_raster",
            Error::InfeasibleTilt { .. } => "infeasible_tilt",
            Error::InvalidConfig(_) => "invalid_config",
        }
    }
}
