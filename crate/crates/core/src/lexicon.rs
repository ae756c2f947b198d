//! Word happiness scores on the 1–9 scale, the neutral-band lens and the
//! park-name stoplist.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::corpus::tokens;
use crate::error::{Error, Result};
use crate::geo::ParkFacility;

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub score: f64,
}

/// Immutable word → score map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    scores: BTreeMap<String, f64>,
}

impl Lexicon {
    /// Builds a lexicon from entries, applying the same checks as
    /// [`load_lexicon`]. Line numbers in errors are 1-based entry positions.
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Result<Self> {
        let mut builder = Builder::default();
        for (i, e) in entries.into_iter().enumerate() {
            builder.push(&e.word, e.score, i as u64 + 1)?;
        }
        Ok(builder.finish())
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.scores.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.scores.iter().map(|(w, &s)| (w.as_str(), s))
    }

    pub fn entries(&self) -> Vec<LexiconEntry> {
        self.iter()
            .map(|(w, s)| LexiconEntry {
                word: w.to_string(),
                score: s,
            })
            .collect()
    }

    fn filtered(&self, keep: impl Fn(&str, f64) -> bool) -> Lexicon {
        Lexicon {
            scores: self
                .scores
                .iter()
                .filter(|(w, &s)| keep(w, s))
                .map(|(w, &s)| (w.clone(), s))
                .collect(),
        }
    }
}

#[derive(Default)]
struct Builder {
    scores: BTreeMap<String, (f64, u64)>,
}

impl Builder {
    fn push(&mut self, word: &str, score: f64, line: u64) -> Result<()> {
        let word = word.trim().to_lowercase();
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvalidRecord {
                line,
                reason: format!("invalid lexicon word {word:?}"),
            });
        }
        if !(score.is_finite() && (MIN_SCORE..=MAX_SCORE).contains(&score)) {
            return Err(Error::ScoreOutOfRange { word, score, line });
        }
        if let Some(&(_, first_line)) = self.scores.get(&word) {
            return Err(Error::DuplicateWord {
                word,
                first_line,
                second_line: line,
            });
        }
        self.scores.insert(word, (score, line));
        Ok(())
    }

    fn finish(self) -> Lexicon {
        Lexicon {
            scores: self.scores.into_iter().map(|(w, (s, _))| (w, s)).collect(),
        }
    }
}

/// Parses a two-column `word,score` (or tab separated) table.
///
/// A first row whose score column is not numeric is taken as a header.
/// Extra columns are ignored; blank lines are skipped.
pub fn load_lexicon<R: Read>(mut source: R) -> Result<Lexicon> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let Some(first) = first else {
        return Err(Error::EmptyLexicon);
    };
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut builder = Builder::default();
    let mut seen_row = false;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let first_row = !seen_row;
        seen_row = true;
        if record.len() < 2 {
            return Err(Error::InvalidRecord {
                line,
                reason: "expected word and score columns".into(),
            });
        }
        let score = match record[1].parse::<f64>() {
            Ok(s) => s,
            Err(_) if first_row => continue,
            Err(_) => {
                return Err(Error::InvalidRecord {
                    line,
                    reason: format!("score {:?} is not a number", &record[1]),
                })
            }
        };
        builder.push(&record[0], score, line)?;
    }
    let lex = builder.finish();
    if lex.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    Ok(lex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensMode {
    /// Exclude `low < score < high`.
    #[default]
    Open,
    /// Exclude `low <= score <= high`.
    Closed,
}

/// Band of near-neutral scores removed before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lens {
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub mode: LensMode,
}

impl Default for Lens {
    fn default() -> Self {
        Lens {
            low: 4.0,
            high: 6.0,
            mode: LensMode::Open,
        }
    }
}

impl Lens {
    pub fn new(low: f64, high: f64, mode: LensMode) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) || low > high {
            return Err(Error::InvalidConfig(format!("lens bounds ({low}, {high})")));
        }
        Ok(Lens { low, high, mode })
    }

    pub fn excludes(&self, score: f64) -> bool {
        match self.mode {
            LensMode::Open => self.low < score && score < self.high,
            LensMode::Closed => self.low <= score && score <= self.high,
        }
    }
}

pub fn apply_lens(lexicon: &Lexicon, lens: &Lens) -> Lexicon {
    lexicon.filtered(|_, s| !lens.excludes(s))
}

/// Tokens of every facility name, using the corpus tokenizer.
pub fn park_name_stoplist(facilities: &[ParkFacility]) -> BTreeSet<String> {
    facilities.iter().flat_map(|f| tokens(&f.name)).collect()
}

pub fn remove_words(lexicon: &Lexicon, stoplist: &BTreeSet<String>) -> Lexicon {
    lexicon.filtered(|w, _| !stoplist.contains(w))
}
