//! Park-exposure detection and relative-hour binning.
//!
//! A user's exposure on a local calendar day is their first in-facility
//! message of that day. Every other message is attached to the user's nearest
//! exposure and placed in bin `sign(Δt)·ceil(|Δt| / 1 h)`, so 3.5 h before
//! lands in −4 and 2.25 h after lands in +3. Bin 0 holds exactly the
//! exposure messages.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::ops::RangeInclusive;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, WordTable};
use crate::error::{Error, Result};
use crate::geo::{AnnotatedMessage, Category};
use crate::tz::StudyTz;

pub const HOUR_MS: i64 = 3_600_000;

/// Bins pooled into the pre-exposure baseline: more than 1 and up to 6 hours before.
pub const BASELINE_BINS: RangeInclusive<i64> = -6..=-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureEvent {
    pub user_id: String,
    pub local_date: NaiveDate,
    pub message_id: String,
    pub facility_id: String,
    pub category: Category,
    pub exposure_time: DateTime<FixedOffset>,
}

/// First in-facility message per user per local day, sorted by user then time.
pub fn detect_exposures(messages: &[AnnotatedMessage], tz: &StudyTz) -> Vec<ExposureEvent> {
    let mut first: BTreeMap<(&str, NaiveDate), &AnnotatedMessage> = BTreeMap::new();
    for m in messages {
        if m.facility.is_none() {
            continue;
        }
        let key = (m.record.user_id.as_str(), tz.local_date(&m.record.timestamp));
        first
            .entry(key)
            .and_modify(|cur| {
                if (m.record.timestamp, &m.record.id) < (cur.record.timestamp, &cur.record.id) {
                    *cur = m;
                }
            })
            .or_insert(m);
    }
    let mut events: Vec<ExposureEvent> = first
        .into_iter()
        .map(|((user, date), m)| {
            let f = m.facility.as_ref().expect("filtered above");
            ExposureEvent {
                user_id: user.to_string(),
                local_date: date,
                message_id: m.record.id.clone(),
                facility_id: f.id.clone(),
                category: f.category.clone(),
                exposure_time: m.record.timestamp,
            }
        })
        .collect();
    events.sort_by(|a, b| {
        (a.user_id.as_str(), a.exposure_time, a.message_id.as_str()).cmp(&(
            b.user_id.as_str(),
            b.exposure_time,
            b.message_id.as_str(),
        ))
    });
    events
}

/// Relative-hour bin for a non-zero offset in milliseconds.
pub fn bin_of(delta_ms: i64) -> i64 {
    let hours = (delta_ms.unsigned_abs() as i64 + HOUR_MS - 1) / HOUR_MS;
    delta_ms.signum() * hours
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedMessage {
    pub message_id: String,
    pub user_id: String,
    pub bin: i64,
    pub exposure_id: String,
    pub facility_id: String,
    pub category: Category,
    /// Posted from inside a facility without being the day's exposure.
    pub in_park: bool,
    pub words: WordTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub words: WordTable,
    pub messages: u64,
    pub in_park: u64,
}

/// Which exposures a computation is restricted to.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum FacilityFilter {
    #[default]
    All,
    Category(Category),
    Facilities(BTreeSet<String>),
}

impl FacilityFilter {
    pub fn matches(&self, m: &BinnedMessage) -> bool {
        match self {
            FacilityFilter::All => true,
            FacilityFilter::Category(c) => &m.category == c,
            FacilityFilter::Facilities(ids) => ids.contains(&m.facility_id),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FacilityFilter::All => "all".to_string(),
            FacilityFilter::Category(c) => c.key().to_string(),
            FacilityFilter::Facilities(ids) => ids.iter().cloned().collect::<Vec<_>>().join("+"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCorpus {
    pub window_hours: i64,
    /// Sorted by (bin, user_id, message_id).
    pub messages: Vec<BinnedMessage>,
}

#[derive(Serialize, Deserialize)]
struct BinnedCorpusFile {
    window: [i64; 2],
    bins: BTreeMap<i64, BinSummary>,
    messages: Vec<BinnedMessage>,
}

impl BinnedCorpus {
    pub fn new(window_hours: i64, mut messages: Vec<BinnedMessage>) -> Self {
        messages.sort_by(|a, b| (a.bin, &a.user_id, &a.message_id).cmp(&(b.bin, &b.user_id, &b.message_id)));
        BinnedCorpus { window_hours, messages }
    }

    pub fn window(&self) -> RangeInclusive<i64> {
        -self.window_hours..=self.window_hours
    }

    /// Per-bin word table, message count and in-park count.
    pub fn summary(&self) -> BTreeMap<i64, BinSummary> {
        let mut out: BTreeMap<i64, BinSummary> = BTreeMap::new();
        for m in &self.messages {
            let s = out.entry(m.bin).or_default();
            s.words.merge(&m.words);
            s.messages += 1;
            s.in_park += u64::from(m.in_park);
        }
        out
    }

    pub fn select(
        &self,
        bins: RangeInclusive<i64>,
        filter: &FacilityFilter,
        include_in_park: bool,
    ) -> Vec<&BinnedMessage> {
        self.messages
            .iter()
            .filter(|m| bins.contains(&m.bin) && filter.matches(m) && (include_in_park || !m.in_park))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = BinnedCorpusFile {
            window: [-self.window_hours, self.window_hours],
            bins: self.summary(),
            messages: self.messages.clone(),
        };
        serde_json::to_value(file).expect("binned corpus serializes")
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let file: BinnedCorpusFile = serde_json::from_reader(reader)?;
        let window_hours = file.window[1];
        if window_hours < 1 || file.window[0] != -window_hours {
            return Err(Error::InvalidConfig(format!("bad bin window {:?}", file.window)));
        }
        Ok(BinnedCorpus::new(window_hours, file.messages))
    }
}

/// Bins every message of users with at least one exposure.
///
/// Messages are matched to the same user's nearest exposure; an exact tie
/// goes to the earlier exposure, making the message a post-exposure message.
/// A non-exposure message with the same timestamp as its exposure is put in
/// bin +1. Messages more than `window_hours` from every exposure are dropped.
pub fn assign_bins(messages: &[AnnotatedMessage], events: &[ExposureEvent], window_hours: i64) -> Result<BinnedCorpus> {
    if window_hours < 1 {
        return Err(Error::InvalidConfig(format!(
            "window_hours must be >= 1, got {window_hours}"
        )));
    }
    let limit = window_hours * HOUR_MS;
    let mut by_user: HashMap<&str, Vec<&ExposureEvent>> = HashMap::new();
    for e in events {
        by_user.entry(e.user_id.as_str()).or_default().push(e);
    }
    for evs in by_user.values_mut() {
        evs.sort_by(|a, b| (a.exposure_time, &a.message_id).cmp(&(b.exposure_time, &b.message_id)));
    }
    let exposure_ids: HashSet<(&str, &str)> = events
        .iter()
        .map(|e| (e.user_id.as_str(), e.message_id.as_str()))
        .collect();

    let mut out = Vec::new();
    for m in messages {
        let Some(evs) = by_user.get(m.record.user_id.as_str()) else {
            continue;
        };
        let is_exposure = exposure_ids.contains(&(m.record.user_id.as_str(), m.record.id.as_str()));
        let (event, bin) = if is_exposure {
            let e = evs
                .iter()
                .find(|e| e.message_id == m.record.id)
                .expect("exposure present");
            (*e, 0)
        } else {
            // events are time-ordered, so strict `<` keeps the earlier one on ties
            let mut best: Option<(&ExposureEvent, i64)> = None;
            for e in evs {
                let delta = (m.record.timestamp - e.exposure_time).num_milliseconds();
                if best.is_none_or(|(_, d)| delta.abs() < d.abs()) {
                    best = Some((e, delta));
                }
            }
            let (e, delta) = best.expect("user has exposures");
            if delta.abs() > limit {
                continue;
            }
            (e, if delta == 0 { 1 } else { bin_of(delta) })
        };
        out.push(BinnedMessage {
            message_id: m.record.id.clone(),
            user_id: m.record.user_id.clone(),
            bin,
            exposure_id: event.message_id.clone(),
            facility_id: event.facility_id.clone(),
            category: event.category.clone(),
            in_park: !is_exposure && m.facility.is_some(),
            words: tokenize(&m.record.text),
        });
    }
    Ok(BinnedCorpus::new(window_hours, out))
}

/// Pooled words of baseline messages tied to exposures matching `filter`.
pub fn baseline_table(binned: &BinnedCorpus, filter: &FacilityFilter) -> Result<WordTable> {
    let table = WordTable::merged(binned.select(BASELINE_BINS, filter, true).into_iter().map(|m| &m.words));
    if table.is_empty() {
        return Err(Error::EmptyPool {
            what: "baseline".to_string(),
            words: 0,
        });
    }
    Ok(table)
}

/// Shape of the per-user secondary in-park activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureDiagnostics {
    pub users: usize,
    pub exposures: usize,
    pub binned_messages: usize,
    /// In-park, non-exposure messages after an exposure, within the window.
    pub secondary_in_park: usize,
    pub mean_secondary_per_user: f64,
    pub fraction_users_without_secondary: f64,
}

pub fn diagnostics(binned: &BinnedCorpus, events: &[ExposureEvent]) -> ExposureDiagnostics {
    let users: BTreeSet<&str> = events.iter().map(|e| e.user_id.as_str()).collect();
    let mut per_user: HashMap<&str, usize> = HashMap::new();
    for m in binned.messages.iter().filter(|m| m.in_park && m.bin > 0) {
        *per_user.entry(m.user_id.as_str()).or_insert(0) += 1;
    }
    let secondary: usize = per_user.values().sum();
    let n = users.len();
    let with = users.iter().filter(|u| per_user.contains_key(*u)).count();
    ExposureDiagnostics {
        users: n,
        exposures: events.len(),
        binned_messages: binned.messages.len(),
        secondary_in_park: secondary,
        mean_secondary_per_user: if n == 0 { 0.0 } else { secondary as f64 / n as f64 },
        fraction_users_without_secondary: if n == 0 { 0.0 } else { (n - with) as f64 / n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MessageRecord;
    use crate::geo::FacilityTag;

    fn msg(id: &str, user: &str, ts: &str, park: Option<(&str, Category)>, text: &str) -> AnnotatedMessage {
        AnnotatedMessage {
            record: MessageRecord {
                id: id.into(),
                user_id: user.into(),
                timestamp: DateTime::parse_from_rfc3339(ts).unwrap(),
                text: text.into(),
                language: "en".into(),
                lat: 0.0,
                lon: 0.0,
            },
            facility: park.map(|(id, category)| FacilityTag {
                id: id.into(),
                category,
            }),
        }
    }

    fn rp() -> Option<(&'static str, Category)> {
        Some(("gg", Category::RegionalPark))
    }

    fn bins_by_id(b: &BinnedCorpus) -> BTreeMap<String, i64> {
        b.messages.iter().map(|m| (m.message_id.clone(), m.bin)).collect()
    }

    #[test]
    fn worked_example_bins() {
        let ms = vec![
            msg("a", "u", "2016-06-01T10:30:00-07:00", None, "x"),
            msg("p", "u", "2016-06-01T14:00:00-07:00", rp(), "x"),
            msg("b", "u", "2016-06-01T16:15:00-07:00", None, "x"),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let b = assign_bins(&ms, &ev, 24).unwrap();
        let got = bins_by_id(&b);
        assert_eq!(got["a"], -4);
        assert_eq!(got["p"], 0);
        assert_eq!(got["b"], 3);
    }

    #[test]
    fn bin_function_edges() {
        assert_eq!(bin_of(HOUR_MS), 1);
        assert_eq!(bin_of(HOUR_MS + 1), 2);
        assert_eq!(bin_of(1), 1);
        assert_eq!(bin_of(-HOUR_MS), -1);
        assert_eq!(bin_of(-(7 * HOUR_MS / 2)), -4);
        assert_eq!(bin_of(9 * HOUR_MS / 4), 3);
    }

    #[test]
    fn first_in_park_message_per_day() {
        let ms = vec![
            msg("late", "u", "2016-06-01T14:00:00-07:00", rp(), "x"),
            msg("early", "u", "2016-06-01T09:00:00-07:00", rp(), "x"),
            msg("next", "u", "2016-06-02T09:00:00-07:00", rp(), "x"),
            msg("out", "v", "2016-06-01T09:00:00-07:00", None, "x"),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let ids: Vec<_> = ev.iter().map(|e| e.message_id.as_str()).collect();
        assert_eq!(ids, ["early", "next"]);
        let mut rev = ms.clone();
        rev.reverse();
        assert_eq!(detect_exposures(&rev, &StudyTz::default()), ev);
        assert!(detect_exposures(&ms[3..], &StudyTz::default()).is_empty());

        let b = assign_bins(&ms, &ev, 24).unwrap();
        let late = b.messages.iter().find(|m| m.message_id == "late").unwrap();
        assert_eq!(late.bin, 5);
        assert!(late.in_park);
        assert_eq!(b.messages.iter().filter(|m| m.bin == 0).count(), 2);
    }

    #[test]
    fn exact_hour_and_equidistant_tie() {
        let ms = vec![
            msg("e1", "u", "2016-06-01T08:00:00-07:00", rp(), "x"),
            msg("m1", "u", "2016-06-01T09:00:00-07:00", None, "x"),
            msg("e2", "u", "2016-06-02T08:00:00-07:00", rp(), "x"),
            msg("mid", "u", "2016-06-01T20:00:00-07:00", None, "x"),
            msg(
                "same",
                "u",
                "2016-06-01T08:00:00-07:00",
                Some(("gg", Category::RegionalPark)),
                "x",
            ),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let b = assign_bins(&ms, &ev, 24).unwrap();
        let got = bins_by_id(&b);
        assert_eq!(got["m1"], 1);
        assert_eq!(got["mid"], 12);
        let mid = b.messages.iter().find(|m| m.message_id == "mid").unwrap();
        assert_eq!(mid.exposure_id, "e1");
        // "same" ties e1 on timestamp but loses on id, so it is a secondary message
        assert_eq!(got["e1"], 0);
        assert_eq!(got["same"], 1);
    }

    #[test]
    fn window_drops_far_messages() {
        let ms = vec![
            msg("p", "u", "2016-06-01T14:00:00-07:00", rp(), "x"),
            msg("far", "u", "2016-06-03T14:00:00-07:00", None, "x"),
            msg("edge", "u", "2016-06-02T14:00:00-07:00", None, "x"),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let b = assign_bins(&ms, &ev, 24).unwrap();
        let got = bins_by_id(&b);
        assert!(!got.contains_key("far"));
        assert_eq!(got["edge"], 24);
        assert!(assign_bins(&ms, &ev, 0).is_err());
    }

    #[test]
    fn baseline_pooling_and_filters() {
        let civic = Some(("plaza", Category::CivicPlazaOrSquare));
        let ms = vec![
            msg("p", "u", "2016-06-01T14:00:00-07:00", rp(), "sunny"),
            msg("m1", "u", "2016-06-01T13:30:00-07:00", None, "close"),
            msg("q", "v", "2016-06-01T14:00:00-07:00", civic, "x"),
            msg("m3", "v", "2016-06-01T11:30:00-07:00", None, "hello"),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let b = assign_bins(&ms, &ev, 24).unwrap();
        let all = baseline_table(&b, &FacilityFilter::All).unwrap();
        assert_eq!(all, tokenize("hello"));
        let regional = FacilityFilter::Category(Category::RegionalPark);
        match baseline_table(&b, &regional) {
            Err(Error::EmptyPool { words: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let civic_only = FacilityFilter::Category(Category::CivicPlazaOrSquare);
        assert_eq!(baseline_table(&b, &civic_only).unwrap(), tokenize("hello"));
    }

    #[test]
    fn json_round_trip_keeps_summary() {
        let ms = vec![
            msg("p", "u", "2016-06-01T14:00:00-07:00", rp(), "sunshine here"),
            msg("x", "u", "2016-06-01T15:00:00-07:00", rp(), "again"),
        ];
        let ev = detect_exposures(&ms, &StudyTz::default());
        let b = assign_bins(&ms, &ev, 6).unwrap();
        let v = b.to_json();
        assert_eq!(v["bins"]["1"]["in_park"], 1);
        assert_eq!(v["bins"]["0"]["words"]["sunshine"], 1);
        assert_eq!(v["window"], serde_json::json!([-6, 6]));
        let back = BinnedCorpus::from_reader(v.to_string().as_bytes()).unwrap();
        assert_eq!(back, b);
        let d = diagnostics(&b, &ev);
        assert_eq!(d.secondary_in_park, 1);
        assert_eq!(d.fraction_users_without_secondary, 0.0);
    }
}
