//! In-process drivers for the `greenspace` command line, shared by the
//! acceptance suite.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use greenspace::synth::Scenario;
use greenspace_cli::{parse_args, run, CliError, Outcome};

/// Runs one subcommand as `greenspace <args>`.
pub fn cli(args: &[&str]) -> Result<Outcome, CliError> {
    run(parse_args(std::iter::once("greenspace").chain(args.iter().copied()))?)
}

/// Outputs of synth → ingest → join → bin for one scenario.
#[derive(Debug, Clone)]
pub struct Staged {
    pub root: PathBuf,
    pub synth: PathBuf,
    pub binned: PathBuf,
    pub lexicon: PathBuf,
    pub stoplist: PathBuf,
    pub facilities: PathBuf,
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Generates `scenario` under `root` and carries it through binning.
pub fn stage(root: &Path, scenario: &Scenario) -> Result<Staged, CliError> {
    let dir = |n: &str| root.join(n);
    let scenario_path = dir("scenario.json");
    std::fs::create_dir_all(root).map_err(|e| CliError::Core(e.into()))?;
    let text = serde_json::to_vec_pretty(scenario).expect("scenario serializes");
    std::fs::write(&scenario_path, text).map_err(|e| CliError::Core(e.into()))?;
    cli(&["synth", "--scenario", s(&scenario_path), "--out", s(&dir("synth"))])?;
    let window = scenario.window_hours.to_string();
    cli(&[
        "ingest",
        "--input",
        s(&dir("synth/corpus.jsonl")),
        "--out",
        s(&dir("ingest")),
    ])?;
    cli(&[
        "join",
        "--corpus",
        s(&dir("ingest/corpus.jsonl")),
        "--facilities",
        s(&dir("synth/facilities.geojson")),
        "--out",
        s(&dir("join")),
    ])?;
    cli(&[
        "bin",
        "--annotated",
        s(&dir("join/annotated.jsonl")),
        "--window",
        &window,
        "--out",
        s(&dir("bin")),
    ])?;
    Ok(Staged {
        root: root.to_path_buf(),
        synth: dir("synth"),
        binned: dir("bin/binned.json"),
        lexicon: dir("synth/lexicon.csv"),
        stoplist: dir("join/stoplist.txt"),
        facilities: dir("synth/facilities.geojson"),
    })
}

impl Staged {
    /// `--binned`, `--lexicon` and `--stoplist` for the scoring subcommands.
    pub fn scoring(&self) -> Vec<String> {
        [
            ("--binned", &self.binned),
            ("--lexicon", &self.lexicon),
            ("--stoplist", &self.stoplist),
        ]
        .into_iter()
        .flat_map(|(f, p)| [f.to_string(), s(p).to_string()])
        .collect()
    }

    /// Runs a scoring subcommand with `extra` flags, writing into `out`.
    pub fn score(&self, command: &str, out: &Path, extra: &[&str]) -> Result<Outcome, CliError> {
        let scoring = self.scoring();
        let mut args: Vec<&str> = vec![command];
        args.extend(scoring.iter().map(String::as_str));
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", s(out)]);
        cli(&args)
    }
}

pub type Row = BTreeMap<String, String>;

/// Header and rows of a CSV file, each row keyed by column name.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Row>), csv::Error> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok((header, rows))
}

/// Parses a numeric cell; panics with the column name on failure.
pub fn cell(row: &Row, col: &str) -> f64 {
    row.get(col)
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("column {col} missing or not numeric in {row:?}"))
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
/// Sidecars are skipped since they carry timestamps.
pub fn data_files(dir: &Path) -> std::io::Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".meta.json") {
                let rel = p.strip_prefix(dir).expect("under dir").to_path_buf();
                out.insert(rel, std::fs::read(&p)?);
            }
        }
    }
    Ok(out)
}
