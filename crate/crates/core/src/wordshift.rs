//! Per-word attribution of a sentiment difference, and word-frequency time
//! series around exposure.
//!
//! A word's contribution to `H_comp − H_ref` is `(vᵢ − H_ref)(p_compᵢ − p_refᵢ)`,
//! where the `p` are relative frequencies among lexicon-matched words. The
//! contributions sum exactly to the difference because both distributions sum
//! to one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::WordTable;
use crate::error::{Error, Result};
use crate::exposure::{BinnedCorpus, FacilityFilter};
use crate::hedonics::Tally;
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Score ≥ 6.
    Positive,
    /// Score ≤ 4.
    Negative,
    /// Only possible when no lens was applied.
    Neutral,
}

impl Polarity {
    pub fn of(score: f64) -> Polarity {
        if score >= 6.0 {
            Polarity::Positive
        } else if score <= 4.0 {
            Polarity::Negative
        } else {
            Polarity::Neutral
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
            Polarity::Neutral => "0",
        }
    }
}

/// Frequency change of a word in the comparison text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub word: String,
    pub score: f64,
    pub p_ref: f64,
    pub p_comp: f64,
    pub contribution: f64,
    pub polarity: Polarity,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordShift {
    pub h_ref: f64,
    pub h_comp: f64,
    pub ref_matched: u64,
    pub comp_matched: u64,
    /// Sorted by |contribution| descending, ties by word.
    pub entries: Vec<ShiftEntry>,
}

impl WordShift {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.contribution).sum()
    }
}

pub fn word_shift(reference: &WordTable, comparison: &WordTable, lexicon: &Lexicon) -> Result<WordShift> {
    let (tr, tc) = (Tally::of(reference, lexicon), Tally::of(comparison, lexicon));
    let h_ref = tr.sentiment().ok_or(Error::NoMatchedWords)?;
    let h_comp = tc.sentiment().ok_or(Error::NoMatchedWords)?;
    let words: BTreeSet<&str> = reference
        .iter()
        .chain(comparison.iter())
        .map(|(w, _)| w)
        .filter(|w| lexicon.get(w).is_some())
        .collect();
    let mut entries: Vec<ShiftEntry> = words
        .into_iter()
        .map(|w| {
            let score = lexicon.get(w).expect("filtered to lexicon words");
            let p_ref = reference.get(w) as f64 / tr.matched as f64;
            let p_comp = comparison.get(w) as f64 / tc.matched as f64;
            let direction = match p_comp.partial_cmp(&p_ref) {
                Some(std::cmp::Ordering::Greater) => Direction::Up,
                Some(std::cmp::Ordering::Less) => Direction::Down,
                _ => Direction::Unchanged,
            };
            ShiftEntry {
                word: w.to_string(),
                score,
                p_ref,
                p_comp,
                contribution: (score - h_ref) * (p_comp - p_ref),
                polarity: Polarity::of(score),
                direction,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.contribution
            .abs()
            .total_cmp(&a.contribution.abs())
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(WordShift {
        h_ref,
        h_comp,
        ref_matched: tr.matched,
        comp_matched: tc.matched,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub bin: i64,
    /// Share of all tokens in the bin; `None` for an empty bin.
    pub raw: Option<f64>,
    pub smoothed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub word: String,
    pub smoothing_window: usize,
    /// Always `"all_tokens"`: scored and unscored words both count.
    pub denominator: String,
    pub points: Vec<SeriesPoint>,
    /// Mean of the non-gap raw frequencies.
    pub window_mean: Option<f64>,
}

/// Centered moving average over `window` positions. The series wraps at its
/// ends, so a gap-free series keeps its mean. Gaps stay gaps and are skipped
/// when averaging their neighbours.
pub fn moving_average(raw: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("smoothing window {window} must be odd")));
    }
    let n = raw.len();
    if n > 0 && window > n {
        return Err(Error::InvalidConfig(format!(
            "smoothing window {window} is longer than the series ({n})"
        )));
    }
    let half = (window / 2) as isize;
    Ok((0..n)
        .map(|i| {
            raw[i]?;
            let vals: Vec<f64> = (-half..=half)
                .filter_map(|d| raw[(i as isize + d).rem_euclid(n as isize) as usize])
                .collect();
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect())
}

/// Relative frequency of `word` in each bin from `-span` to `span`.
pub fn frequency_timeseries(
    binned: &BinnedCorpus,
    word: &str,
    smoothing_window: usize,
    span: i64,
    filter: &FacilityFilter,
) -> Result<FrequencySeries> {
    let word = word.trim().to_lowercase();
    if word.is_empty() {
        return Err(Error::InvalidConfig("empty word".into()));
    }
    let span = span.min(binned.window_hours);
    if span < 0 {
        return Err(Error::InvalidConfig(format!("negative span {span}")));
    }
    let bins: Vec<i64> = (-span..=span).collect();
    let raw: Vec<Option<f64>> = bins
        .iter()
        .map(|&b| {
            let table = WordTable::merged(binned.select(b..=b, filter, true).into_iter().map(|m| &m.words));
            (!table.is_empty()).then(|| table.get(&word) as f64 / table.total() as f64)
        })
        .collect();
    let smoothed = moving_average(&raw, smoothing_window)?;
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    let window_mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(FrequencySeries {
        word,
        smoothing_window,
        denominator: "all_tokens".to_string(),
        points: bins
            .into_iter()
            .zip(raw)
            .zip(smoothed)
            .map(|((bin, raw), smoothed)| SeriesPoint { bin, raw, smoothed })
            .collect(),
        window_mean,
    })
}
