//! Run configuration: JSON file merged with command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use greenspace::corpus::UserFilterConfig;
use greenspace::exposure::FacilityFilter;
use greenspace::geo::Category;
use greenspace::hedonics::BootstrapConfig;
use greenspace::lexicon::{Lens, LensMode};
use greenspace::synth::Scenario;
use greenspace::tz::StudyTz;
use greenspace::vegetation::DEFAULT_VEG_THRESHOLD;

use crate::CliError;

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bootstrap runs.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Share of messages drawn per bootstrap run.
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    /// Lens bounds as `lo,hi`.
    #[arg(long, global = true, value_parser = parse_pair)]
    pub lens: Option<(f64, f64)>,
    /// Include the lens bounds themselves in the excluded band.
    #[arg(long, global = true)]
    pub lens_closed: bool,
    /// IANA name or fixed offset such as `UTC-7`.
    #[arg(long, global = true)]
    pub tz: Option<String>,
    /// Half-width of the relative-hour window.
    #[arg(long, global = true)]
    pub window: Option<i64>,
    #[arg(long, global = true)]
    pub veg_threshold: Option<f64>,
    /// Restrict to one facility category (`all` for no restriction).
    #[arg(long, global = true)]
    pub category: Option<String>,
    /// Abort on the first malformed input row.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Bootstrap worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub annotated: Option<PathBuf>,
    pub binned: Option<PathBuf>,
    pub facilities: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub raster: Option<PathBuf>,
    pub water: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    /// Fields set in `over` replace those in `self`.
    fn overlay(self, over: Paths) -> Paths {
        Paths {
            input: over.input.or(self.input),
            corpus: over.corpus.or(self.corpus),
            annotated: over.annotated.or(self.annotated),
            binned: over.binned.or(self.binned),
            facilities: over.facilities.or(self.facilities),
            lexicon: over.lexicon.or(self.lexicon),
            stoplist: over.stoplist.or(self.stoplist),
            raster: over.raster.or(self.raster),
            water: over.water.or(self.water),
            stats: over.stats.or(self.stats),
            out: over.out.or(self.out),
        }
    }

    /// Relative paths in a config file are taken relative to the file.
    fn rebase(self, base: &Path) -> Paths {
        let r = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        Paths {
            input: r(self.input),
            corpus: r(self.corpus),
            annotated: r(self.annotated),
            binned: r(self.binned),
            facilities: r(self.facilities),
            lexicon: r(self.lexicon),
            stoplist: r(self.stoplist),
            raster: r(self.raster),
            water: r(self.water),
            stats: r(self.stats),
            out: r(self.out),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserFilterFile {
    pub max_messages_per_day: Option<u32>,
    pub max_duplicate_ratio: Option<f64>,
    pub language: Option<String>,
    /// Disable all user heuristics.
    pub disabled: bool,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub paths: Paths,
    pub lens: Option<[f64; 2]>,
    pub lens_mode: Option<LensMode>,
    pub tz: Option<String>,
    pub window: Option<i64>,
    pub runs: Option<usize>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub veg_threshold: Option<f64>,
    pub strict: Option<bool>,
    pub category: Option<String>,
    pub facility_ids: Option<Vec<String>>,
    pub user_filter: UserFilterFile,
    pub smoothing: Option<usize>,
    pub span: Option<i64>,
    pub scenario: Option<Scenario>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let cfg: FileConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(FileConfig {
            paths: cfg.paths.clone().rebase(base),
            ..cfg
        })
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub paths: Paths,
    pub lens: Lens,
    #[serde(serialize_with = "display")]
    pub tz: StudyTz,
    pub window_hours: i64,
    pub bootstrap: BootstrapConfig,
    pub veg_threshold: f64,
    pub strict: bool,
    #[serde(serialize_with = "filter_label")]
    pub filter: FacilityFilter,
    /// Whether the user picked a filter explicitly.
    #[serde(skip)]
    pub filter_explicit: bool,
    pub user_filter: Option<UserFilterSettings>,
    pub smoothing: usize,
    pub span: i64,
    #[serde(skip)]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserFilterSettings {
    pub max_messages_per_day: Option<u32>,
    pub max_duplicate_ratio: Option<f64>,
    pub language: Option<String>,
}

fn display<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn filter_label<S: serde::Serializer>(f: &FacilityFilter, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&f.label())
}

impl RunConfig {
    pub fn resolve(flags: &GlobalArgs, command_paths: Paths) -> Result<RunConfig, CliError> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flag_paths = Paths {
            out: flags.out.clone(),
            ..command_paths
        };
        let paths = file.paths.clone().overlay(flag_paths);
        let usage = |e: greenspace::Error| CliError::Usage(e.to_string());

        let mode = if flags.lens_closed {
            LensMode::Closed
        } else {
            file.lens_mode.unwrap_or_default()
        };
        let lens = match flags.lens.or(file.lens.map(|[a, b]| (a, b))) {
            Some((lo, hi)) => Lens::new(lo, hi, mode).map_err(usage)?,
            None => Lens {
                mode,
                ..Lens::default()
            },
        };
        let tz = match flags.tz.as_ref().or(file.tz.as_ref()) {
            Some(s) => s.parse::<StudyTz>().map_err(usage)?,
            None => StudyTz::default(),
        };
        let window_hours = flags.window.or(file.window).unwrap_or(24);
        if window_hours < 1 {
            return Err(CliError::Usage(format!("--window must be >= 1, got {window_hours}")));
        }
        let defaults = BootstrapConfig::default();
        let bootstrap = BootstrapConfig {
            runs: flags.runs.or(file.runs).unwrap_or(defaults.runs),
            fraction: flags.fraction.or(file.fraction).unwrap_or(defaults.fraction),
            seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
            workers: flags.workers.or(file.workers),
        };
        bootstrap.validate().map_err(usage)?;
        let veg_threshold = flags
            .veg_threshold
            .or(file.veg_threshold)
            .unwrap_or(DEFAULT_VEG_THRESHOLD);
        if !veg_threshold.is_finite() {
            return Err(CliError::Usage(format!("--veg-threshold {veg_threshold}")));
        }
        let category = flags.category.clone().or(file.category.clone());
        let (filter, filter_explicit) = match (&category, &file.facility_ids) {
            (Some(c), _) if c.eq_ignore_ascii_case("all") => (FacilityFilter::All, true),
            (Some(c), _) => (FacilityFilter::Category(Category::parse(c)), true),
            (None, Some(ids)) => (
                FacilityFilter::Facilities(ids.iter().cloned().collect::<BTreeSet<_>>()),
                true,
            ),
            (None, None) => (FacilityFilter::All, false),
        };
        let uf = &file.user_filter;
        let base = UserFilterConfig::default();
        let user_filter = (!uf.disabled).then(|| UserFilterSettings {
            max_messages_per_day: uf.max_messages_per_day.or(base.max_messages_per_day),
            max_duplicate_ratio: uf.max_duplicate_ratio.or(base.max_duplicate_ratio),
            language: uf.language.clone().or(base.language),
        });
        let smoothing = file.smoothing.unwrap_or(3);
        let span = file.span.unwrap_or(12);
        Ok(RunConfig {
            paths,
            lens,
            tz,
            window_hours,
            bootstrap,
            veg_threshold,
            strict: flags.strict || file.strict.unwrap_or(false),
            filter,
            filter_explicit,
            user_filter,
            smoothing,
            span,
            scenario: file.scenario,
        })
    }

    pub fn user_filter_config(&self) -> Option<UserFilterConfig> {
        self.user_filter.as_ref().map(|u| UserFilterConfig {
            max_messages_per_day: u.max_messages_per_day,
            max_duplicate_ratio: u.max_duplicate_ratio,
            language: u.language.clone(),
            tz: self.tz,
        })
    }

    /// A required input path; it must exist.
    pub fn input(&self, pick: impl Fn(&Paths) -> &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
        let p = pick(&self.paths)
            .clone()
            .ok_or_else(|| CliError::Usage(format!("missing --{flag}")))?;
        if !p.exists() {
            return Err(CliError::MissingInput(p));
        }
        Ok(p)
    }

    /// An optional input path; it must exist when given.
    pub fn optional_input(&self, pick: impl Fn(&Paths) -> &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        match pick(&self.paths) {
            Some(p) if !p.exists() => Err(CliError::MissingInput(p.clone())),
            other => Ok(other.clone()),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
