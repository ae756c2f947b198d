//! Message records, tokenization and user-level filtering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geo::AnnotatedMessage;
use crate::tz::StudyTz;

/// One geotagged, timestamped message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: String,
    pub user_id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub text: String,
    /// Language tag; `"und"` when unknown.
    pub language: String,
    pub lat: f64,
    pub lon: f64,
}

/// Word → frequency table. Zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, u64>", into = "BTreeMap<String, u64>")]
pub struct WordTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl WordTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, word: &str, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(word.to_string()).or_insert(0) += n;
        self.total += n;
    }

    pub fn merge(&mut self, other: &WordTable) {
        for (w, &n) in &other.counts {
            self.add(w, n);
        }
    }

    pub fn merged<'a>(tables: impl IntoIterator<Item = &'a WordTable>) -> WordTable {
        let mut out = WordTable::new();
        for t in tables {
            out.merge(t);
        }
        out
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(w, &n)| (w.as_str(), n))
    }
}

impl From<BTreeMap<String, u64>> for WordTable {
    fn from(counts: BTreeMap<String, u64>) -> Self {
        let mut t = WordTable::new();
        for (w, n) in counts {
            t.add(&w, n);
        }
        t
    }
}

impl From<WordTable> for BTreeMap<String, u64> {
    fn from(t: WordTable) -> Self {
        t.counts
    }
}

impl<S: AsRef<str>> FromIterator<S> for WordTable {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut t = WordTable::new();
        for w in iter {
            t.add(w.as_ref(), 1);
        }
        t
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Lowercased tokens of `text`, in order.
///
/// Splits on whitespace, drops URL tokens, then strips leading and trailing
/// characters that are not letters or digits. Interior punctuation is kept,
/// so contractions such as `don't` survive. Typographic apostrophes are
/// folded to `'` first.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter(|t| !is_url(t)).filter_map(|t| {
        let t = t.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            None
        } else {
            Some(t.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase())
        }
    })
}

pub fn tokenize(text: &str) -> WordTable {
    tokens(text).collect()
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
    /// Inclusive start of the study window.
    pub window_start: Option<DateTime<FixedOffset>>,
    /// Exclusive end of the study window.
    pub window_end: Option<DateTime<FixedOffset>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub accepted: u64,
    pub malformed: u64,
    pub out_of_range: u64,
    pub out_of_window: u64,
    pub duplicates: u64,
    /// `(line, reason)` for every rejected row.
    pub rejected: Vec<(u64, String)>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub messages: Vec<MessageRecord>,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    /// `.csv` means CSV; anything else is read as newline-delimited JSON.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(deserialize_with = "string_or_number")]
    id: String,
    #[serde(deserialize_with = "string_or_number")]
    user_id: String,
    timestamp: String,
    text: String,
    #[serde(default)]
    language: Option<String>,
    lat: f64,
    lon: f64,
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        S(String),
        I(i64),
        U(u64),
    }
    Ok(match Either::deserialize(d)? {
        Either::S(s) => s,
        Either::I(i) => i.to_string(),
        Either::U(u) => u.to_string(),
    })
}

enum Reject {
    Malformed(String),
    Range(String),
    Window(String),
}

fn validate(raw: RawRecord, cfg: &IngestConfig) -> std::result::Result<MessageRecord, Reject> {
    if raw.id.trim().is_empty() {
        return Err(Reject::Malformed("empty id".into()));
    }
    if raw.user_id.trim().is_empty() {
        return Err(Reject::Malformed("empty user_id".into()));
    }
    let timestamp = DateTime::parse_from_rfc3339(raw.timestamp.trim())
        .map_err(|e| Reject::Malformed(format!("timestamp {:?}: {e}", raw.timestamp)))?;
    if !(raw.lat.is_finite() && (-90.0..=90.0).contains(&raw.lat)) {
        return Err(Reject::Range(format!("lat {} out of range", raw.lat)));
    }
    if !(raw.lon.is_finite() && (-180.0..=180.0).contains(&raw.lon)) {
        return Err(Reject::Range(format!("lon {} out of range", raw.lon)));
    }
    if cfg.window_start.is_some_and(|s| timestamp < s) || cfg.window_end.is_some_and(|e| timestamp >= e) {
        return Err(Reject::Window(format!("timestamp {timestamp} outside study window")));
    }
    let language = raw
        .language
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .unwrap_or_else(|| "und".to_string());
    Ok(MessageRecord {
        id: raw.id,
        user_id: raw.user_id,
        timestamp,
        text: raw.text,
        language,
        lat: raw.lat,
        lon: raw.lon,
    })
}

fn record_order(a: &MessageRecord, b: &MessageRecord) -> std::cmp::Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| a.user_id.cmp(&b.user_id))
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.language.cmp(&b.language))
        .then_with(|| a.lat.total_cmp(&b.lat))
        .then_with(|| a.lon.total_cmp(&b.lon))
}

fn ingest_rows(
    rows: impl Iterator<Item = (u64, std::result::Result<RawRecord, String>)>,
    cfg: &IngestConfig,
) -> Result<Ingested> {
    let mut report = IngestReport::default();
    let mut accepted = Vec::new();
    for (line, row) in rows {
        report.rows_read += 1;
        let outcome = match row {
            Ok(raw) => validate(raw, cfg),
            Err(e) => Err(Reject::Malformed(e)),
        };
        match outcome {
            Ok(rec) => accepted.push((line, rec)),
            Err(reject) => {
                let reason = match reject {
                    Reject::Malformed(r) => {
                        report.malformed += 1;
                        r
                    }
                    Reject::Range(r) => {
                        report.out_of_range += 1;
                        r
                    }
                    Reject::Window(r) => {
                        report.out_of_window += 1;
                        r
                    }
                };
                if cfg.strict {
                    return Err(Error::InvalidRecord { line, reason });
                }
                report.rejected.push((line, reason));
            }
        }
    }

    // Among rows sharing an id keep the smallest record so the outcome does
    // not depend on input order.
    accepted.sort_by(|(la, a), (lb, b)| a.id.cmp(&b.id).then_with(|| record_order(a, b)).then(la.cmp(lb)));
    let mut messages: Vec<MessageRecord> = Vec::with_capacity(accepted.len());
    for (line, rec) in accepted {
        if messages.last().is_some_and(|m| m.id == rec.id) {
            report.duplicates += 1;
            let reason = format!("duplicate id {:?}", rec.id);
            if cfg.strict {
                return Err(Error::InvalidRecord { line, reason });
            }
            report.rejected.push((line, reason));
            continue;
        }
        messages.push(rec);
    }
    messages.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then_with(|| a.timestamp.cmp(&b.timestamp))
            .then_with(|| a.id.cmp(&b.id))
    });
    report.rejected.sort();
    report.accepted = messages.len() as u64;
    Ok(Ingested { messages, report })
}

/// Reads, validates, de-duplicates and sorts records by `(user_id, timestamp)`.
pub fn ingest<R: Read>(reader: R, format: RecordFormat, cfg: &IngestConfig) -> Result<Ingested> {
    match format {
        RecordFormat::Jsonl => {
            let reader = std::io::BufReader::new(reader);
            let mut rows = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<RawRecord>(&line).map_err(|e| e.to_string());
                rows.push((i as u64 + 1, parsed));
            }
            ingest_rows(rows.into_iter(), cfg)
        }
        RecordFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            let mut rows = Vec::new();
            for rec in rdr.deserialize::<RawRecord>() {
                match rec {
                    Ok(r) => rows.push((0, Ok(r))),
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(0);
                        if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                            return Err(e.into());
                        }
                        rows.push((line, Err(e.to_string())));
                    }
                }
            }
            // csv positions for successful rows are not exposed by deserialize;
            // number them by data row (header is line 1).
            let rows = rows
                .into_iter()
                .enumerate()
                .map(|(i, (line, r))| (if line == 0 { i as u64 + 2 } else { line }, r));
            ingest_rows(rows, cfg)
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserFilterConfig {
    /// Users posting more than this many messages on any local day are dropped.
    pub max_messages_per_day: Option<u32>,
    /// Users whose share of messages with a repeated text exceeds this are dropped.
    pub max_duplicate_ratio: Option<f64>,
    /// Users without an in-facility message in this language are dropped.
    pub language: Option<String>,
    pub tz: StudyTz,
}

impl Default for UserFilterConfig {
    fn default() -> Self {
        Self {
            max_messages_per_day: Some(100),
            max_duplicate_ratio: Some(0.5),
            language: Some("en".to_string()),
            tz: StudyTz::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    MessageRate,
    DuplicateText,
    Language,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserFilterReport {
    pub users_in: usize,
    pub users_out: usize,
    pub removed: BTreeMap<String, RemovalReason>,
}

/// Share of a user's messages whose text occurs more than once for that user.
pub fn duplicate_ratio<'a>(texts: impl IntoIterator<Item = &'a str>) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut n = 0usize;
    for t in texts {
        *counts.entry(t.trim()).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let repeated: usize = counts.values().filter(|&&c| c > 1).sum();
    repeated as f64 / n as f64
}

fn language_matches(tag: &str, wanted: &str) -> bool {
    let primary = tag.split(['-', '_']).next().unwrap_or("");
    primary.eq_ignore_ascii_case(wanted) || tag.eq_ignore_ascii_case(wanted)
}

/// Drops likely bots and businesses, and users with no in-facility message
/// in the configured language. Rules are checked in the order rate,
/// duplicate text, language; the first failing rule is reported.
pub fn filter_users(
    messages: &[AnnotatedMessage],
    cfg: &UserFilterConfig,
) -> (Vec<AnnotatedMessage>, UserFilterReport) {
    let mut by_user: BTreeMap<&str, Vec<&AnnotatedMessage>> = BTreeMap::new();
    for m in messages {
        by_user.entry(m.record.user_id.as_str()).or_default().push(m);
    }
    let mut report = UserFilterReport {
        users_in: by_user.len(),
        ..Default::default()
    };
    let mut keep: BTreeSet<&str> = BTreeSet::new();
    for (user, msgs) in &by_user {
        let reason = if let Some(cap) = cfg.max_messages_per_day {
            let mut per_day: HashMap<NaiveDate, u32> = HashMap::new();
            for m in msgs {
                *per_day.entry(cfg.tz.local_date(&m.record.timestamp)).or_insert(0) += 1;
            }
            per_day.values().any(|&c| c > cap).then_some(RemovalReason::MessageRate)
        } else {
            None
        };
        let reason = reason.or_else(|| {
            cfg.max_duplicate_ratio.and_then(|cap| {
                (duplicate_ratio(msgs.iter().map(|m| m.record.text.as_str())) > cap)
                    .then_some(RemovalReason::DuplicateText)
            })
        });
        let reason = reason.or_else(|| {
            cfg.language.as_deref().and_then(|lang| {
                let ok = msgs
                    .iter()
                    .any(|m| m.facility.is_some() && language_matches(&m.record.language, lang));
                (!ok).then_some(RemovalReason::Language)
            })
        });
        match reason {
            Some(r) => {
                report.removed.insert(user.to_string(), r);
            }
            None => {
                keep.insert(user);
            }
        }
    }
    report.users_out = keep.len();
    let kept = messages
        .iter()
        .filter(|m| keep.contains(m.record.user_id.as_str()))
        .cloned()
        .collect();
    (kept, report)
}
