//! Pipeline stages as in-memory functions. Subcommands wrap these with file
//! I/O; [`fused_change`] chains them without touching disk.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;

use greenspace::corpus::{filter_users, ingest, IngestConfig, Ingested, MessageRecord, RecordFormat, UserFilterReport};
use greenspace::exposure::{assign_bins, detect_exposures, BinnedCorpus, ExposureEvent, FacilityFilter};
use greenspace::geo::{load_facilities, spatial_join, AnnotatedMessage, ParkFacility};
use greenspace::hedonics::{exposure_change, DiffEstimate};
use greenspace::lexicon::{apply_lens, load_lexicon, park_name_stoplist, remove_words, Lexicon};
use greenspace::Error;

use crate::{CliError, RunConfig};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(Error::from)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::InvalidRecord {
            line: i as u64 + 1,
            reason: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn ingest_path(path: &Path, cfg: &IngestConfig) -> Result<Ingested, CliError> {
    Ok(ingest(open(path)?, RecordFormat::from_path(path), cfg)?)
}

pub fn facilities(path: &Path) -> Result<Vec<ParkFacility>, CliError> {
    Ok(load_facilities(open(path)?)?)
}

pub fn binned(path: &Path) -> Result<BinnedCorpus, CliError> {
    Ok(BinnedCorpus::from_reader(open(path)?)?)
}

pub fn read_stoplist(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let mut out = BTreeSet::new();
    for line in open(path)?.lines() {
        let w = line.map_err(Error::from)?.trim().to_lowercase();
        if !w.is_empty() {
            out.insert(w);
        }
    }
    Ok(out)
}

pub fn stoplist_text(words: &BTreeSet<String>) -> Vec<u8> {
    words.iter().flat_map(|w| format!("{w}\n").into_bytes()).collect()
}

/// Raw lexicon with the lens and stoplist applied.
pub fn lexicon(path: &Path, stoplist: Option<&BTreeSet<String>>, rc: &RunConfig) -> Result<Lexicon, CliError> {
    let lex = apply_lens(&load_lexicon(open(path)?)?, &rc.lens);
    let lex = match stoplist {
        Some(s) => remove_words(&lex, s),
        None => lex,
    };
    if lex.is_empty() {
        return Err(Error::EmptyLexicon.into());
    }
    Ok(lex)
}

/// Spatial join followed by the user heuristics, when enabled.
pub fn join(
    messages: &[MessageRecord],
    facilities: &[ParkFacility],
    rc: &RunConfig,
) -> (Vec<AnnotatedMessage>, Option<UserFilterReport>) {
    let annotated = spatial_join(messages, facilities);
    match rc.user_filter_config() {
        Some(cfg) => {
            let (kept, report) = filter_users(&annotated, &cfg);
            (kept, Some(report))
        }
        None => (annotated, None),
    }
}

pub fn bin(annotated: &[AnnotatedMessage], rc: &RunConfig) -> Result<(BinnedCorpus, Vec<ExposureEvent>), CliError> {
    let events = detect_exposures(annotated, &rc.tz);
    let binned = assign_bins(annotated, &events, rc.window_hours)?;
    Ok((binned, events))
}

/// The configured filter, or `all` plus every category present.
pub fn change_filters(binned: &BinnedCorpus, rc: &RunConfig) -> Vec<FacilityFilter> {
    if rc.filter_explicit {
        return vec![rc.filter.clone()];
    }
    let mut cats: Vec<_> = binned
        .messages
        .iter()
        .map(|m| m.category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    cats.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    std::iter::once(FacilityFilter::All)
        .chain(cats.into_iter().map(FacilityFilter::Category))
        .collect()
}

/// One change estimate per filter. With an explicit filter any failure is
/// returned; otherwise categories that cannot be estimated are skipped and
/// listed.
pub type ChangeRows = (Vec<(String, DiffEstimate)>, Vec<(String, String)>);

pub fn change_rows(binned: &BinnedCorpus, lex: &Lexicon, rc: &RunConfig) -> Result<ChangeRows, CliError> {
    let (mut rows, mut skipped) = (Vec::new(), Vec::new());
    for f in change_filters(binned, rc) {
        match exposure_change(binned, lex, &f, &rc.bootstrap) {
            Ok(d) => rows.push((f.label(), d)),
            Err(e)
                if !rc.filter_explicit && f != FacilityFilter::All && e.kind() == greenspace::ErrorKind::EmptyPool =>
            {
                skipped.push((f.label(), e.to_string()))
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((rows, skipped))
}

/// ingest → join → bin → change in one pass, without intermediate files.
pub fn fused_change(
    input: &Path,
    facilities_path: &Path,
    lexicon_path: &Path,
    ingest_cfg: &IngestConfig,
    rc: &RunConfig,
) -> Result<ChangeRows, CliError> {
    let corpus = ingest_path(input, ingest_cfg)?;
    let parks = facilities(facilities_path)?;
    let (annotated, _) = join(&corpus.messages, &parks, rc);
    let (binned, _) = bin(&annotated, rc)?;
    let lex = lexicon(lexicon_path, Some(&park_name_stoplist(&parks)), rc)?;
    change_rows(&binned, &lex, rc)
}
