//! Synthetic corpora with known expected sentiment per relative-hour bin.
//!
//! Bin `b` draws words i.i.d. from a mixture over the vocabulary. Let `S` be
//! the scored words that survive the lens, `q` the baseline probabilities,
//! `m = Σ_S q` and `H_b` the weighted-score expectation of `q` over `S`. To
//! move the expectation by `δ`, scored mass is shifted linearly toward the
//! words on the far side of `H_b`:
//!
//! ```text
//! q'_i = (1 − λ) q_i + λ m q_A,i     for i in S
//! q'_i = q_i                         otherwise
//! λ    = δ / (H_A − H_b)
//! ```
//!
//! where `q_A` is `q` restricted to `A = {i ∈ S : v_i > H_b}` (or `< H_b` when
//! `δ < 0`) and renormalized, and `H_A` is its expectation. Unscored words keep
//! their frequency, and the expectation of `q'` over `S` is exactly `H_b + δ`.
//! The tilt is infeasible when `λ > 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokens, MessageRecord};
use crate::error::{Error, Result};
use crate::geo::{facilities_to_geojson, polygons_to_geojson, Category, ParkFacility, Polygon};
use crate::lexicon::{Lens, Lexicon, LexiconEntry};
use crate::seeding::{derive_seed, run_rng, STREAM_SYNTH};
use crate::vegetation::RasterGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub word: String,
    /// `None` for words absent from the emitted lexicon.
    pub score: Option<f64>,
    /// Relative baseline weight; normalized internally.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPark {
    pub id: String,
    pub name: String,
    pub category: Category,
    /// Axis-aligned extent `[min_lon, min_lat, max_lon, max_lat]`.
    pub extent: [f64; 4],
    /// NDVI painted into the raster inside the park.
    pub ndvi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub vocabulary: Vec<VocabEntry>,
    /// Bin → sentiment shift in score units. Missing bins have no shift.
    pub effect_profile: BTreeMap<i64, f64>,
    /// Word → (bin → frequency multiplier), applied before the tilt.
    pub frequency_effects: BTreeMap<String, BTreeMap<i64, f64>>,
    pub users: usize,
    /// Poisson rate of non-exposure messages per user per hourly bin.
    pub messages_per_user_per_bin: f64,
    /// Inclusive bounds of the uniform word count per message.
    pub words_per_message: (usize, usize),
    pub window_hours: i64,
    /// Chance that a message in bins 1..=6 is posted from inside the park.
    pub secondary_in_park_prob: f64,
    pub parks: Vec<SynthPark>,
    /// Water polygons as extents, painted with negative NDVI.
    pub water: Vec<[f64; 4]>,
    /// Extent where all out-of-park messages are placed.
    pub elsewhere: [f64; 4],
    pub start_date: NaiveDate,
    pub utc_offset_hours: i32,
    pub seed: u64,
    pub lens: Lens,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            vocabulary: default_vocabulary(),
            effect_profile: [(0, 0.23), (1, 0.2), (2, 0.15), (3, 0.1)].into_iter().collect(),
            frequency_effects: BTreeMap::new(),
            users: 300,
            messages_per_user_per_bin: 1.0,
            words_per_message: (3, 12),
            window_hours: 24,
            secondary_in_park_prob: 0.3,
            parks: default_parks(),
            water: vec![[-122.49, 37.77, -122.485, 37.78]],
            elsewhere: [-122.39, 37.72, -122.37, 37.74],
            start_date: NaiveDate::from_ymd_opt(2016, 6, 1).expect("valid date"),
            utc_offset_hours: -7,
            seed: 0,
            lens: Lens::default(),
        }
    }
}

/// 48 scored words spread over 1.5..8.5 and 32 unscored fillers.
pub fn default_vocabulary() -> Vec<VocabEntry> {
    let scored = (0..48).map(|i| VocabEntry {
        word: format!("w{i:02}"),
        score: Some(((1.5 + 7.0 * i as f64 / 47.0) * 100.0).round() / 100.0),
        weight: 1.0 + i as f64 / 47.0,
    });
    let filler = (0..32).map(|i| VocabEntry {
        word: format!("f{i:02}"),
        score: None,
        weight: 1.0,
    });
    scored.chain(filler).collect()
}

pub fn default_parks() -> Vec<SynthPark> {
    vec![
        SynthPark {
            id: "P1".into(),
            name: "Alder Regional Park".into(),
            category: Category::RegionalPark,
            extent: [-122.49, 37.77, -122.47, 37.78],
            ndvi: 0.45,
        },
        SynthPark {
            id: "P2".into(),
            name: "Birch Playground".into(),
            category: Category::NeighborhoodParkOrPlayground,
            extent: [-122.45, 37.765, -122.446, 37.768],
            ndvi: 0.3,
        },
        SynthPark {
            id: "P3".into(),
            name: "Cedar Plaza".into(),
            category: Category::CivicPlazaOrSquare,
            extent: [-122.42, 37.785, -122.418, 37.787],
            ndvi: 0.1,
        },
    ]
}

fn extent_ring(e: &[f64; 4]) -> Vec<(f64, f64)> {
    vec![(e[0], e[1]), (e[2], e[1]), (e[2], e[3]), (e[0], e[3])]
}

fn acres_of(e: &[f64; 4]) -> f64 {
    const M_PER_DEG: f64 = 111_320.0;
    const M2_PER_ACRE: f64 = 4_046.856_422_4;
    let lat = ((e[1] + e[3]) / 2.0).to_radians();
    (e[2] - e[0]) * (e[3] - e[1]) * M_PER_DEG * M_PER_DEG * lat.cos() / M2_PER_ACRE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTruth {
    pub shift: f64,
    pub expected_sentiment: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub baseline_sentiment: f64,
    pub lens: Lens,
    pub window_hours: i64,
    /// Last k such that every bin 1..=k has a positive planted shift.
    pub planted_duration: i64,
    pub users: usize,
    pub messages: usize,
    pub bins: BTreeMap<i64, BinTruth>,
}

/// Per-bin word distributions and their expected sentiment.
#[derive(Debug, Clone)]
pub struct Model {
    pub words: Vec<String>,
    /// Lens-surviving score per word.
    pub scores: Vec<Option<f64>>,
    pub baseline_sentiment: f64,
    pub bins: BTreeMap<i64, (Vec<f64>, BinTruth)>,
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn expectation(q: &[f64], scores: &[Option<f64>], keep: impl Fn(f64) -> bool) -> Option<(f64, f64)> {
    let (mut mass, mut weighted) = (0.0, 0.0);
    for (p, v) in q.iter().zip(scores) {
        if let Some(v) = v.filter(|&v| keep(v)) {
            mass += p;
            weighted += p * v;
        }
    }
    (mass > 0.0).then(|| (mass, weighted / mass))
}

fn tilt(q: &[f64], scores: &[Option<f64>], bin: i64, h0: f64, target: f64) -> Result<(Vec<f64>, f64)> {
    let (m, hb) = expectation(q, scores, |_| true).expect("validated: scored mass is positive");
    let delta = target - hb;
    if delta == 0.0 {
        return Ok((q.to_vec(), 0.0));
    }
    let up = expectation(q, scores, |v| v > hb);
    let down = expectation(q, scores, |v| v < hb);
    let (max, min) = (up.map_or(hb, |a| a.1) - h0, down.map_or(hb, |a| a.1) - h0);
    let infeasible = || Error::InfeasibleTilt {
        bin,
        shift: target - h0,
        min,
        max,
    };
    let side = if delta > 0.0 { up } else { down };
    let (mass_a, ha) = side.ok_or_else(infeasible)?;
    let lambda = delta / (ha - hb);
    if !(0.0..=1.0).contains(&lambda) {
        return Err(infeasible());
    }
    let in_a = |v: f64| if delta > 0.0 { v > hb } else { v < hb };
    let out = q
        .iter()
        .zip(scores)
        .map(|(&p, v)| match v {
            Some(v) if in_a(*v) => (1.0 - lambda) * p + lambda * m * p / mass_a,
            Some(_) => (1.0 - lambda) * p,
            None => p,
        })
        .collect();
    Ok((out, lambda))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.users == 0 {
            return bad("scenario needs at least one user".into());
        }
        if !(self.messages_per_user_per_bin.is_finite() && self.messages_per_user_per_bin >= 0.0) {
            return bad(format!("message rate {}", self.messages_per_user_per_bin));
        }
        let (lo, hi) = self.words_per_message;
        if lo == 0 || lo > hi {
            return bad(format!("words per message ({lo}, {hi})"));
        }
        if self.window_hours < 1 {
            return bad(format!("window of {} hours", self.window_hours));
        }
        if !(0.0..=1.0).contains(&self.secondary_in_park_prob) {
            return bad(format!("in-park probability {}", self.secondary_in_park_prob));
        }
        if self.vocabulary.is_empty() {
            return bad("empty vocabulary".into());
        }
        let mut seen = BTreeSet::new();
        for v in &self.vocabulary {
            if tokens(&v.word).collect::<Vec<_>>() != [v.word.clone()] {
                return bad(format!("vocabulary word {:?} does not tokenize to itself", v.word));
            }
            if !seen.insert(v.word.as_str()) {
                return bad(format!("duplicate vocabulary word {:?}", v.word));
            }
            if !(v.weight.is_finite() && v.weight > 0.0) {
                return bad(format!("weight {} for {:?}", v.weight, v.word));
            }
            if v.score.is_some_and(|s| !(1.0..=9.0).contains(&s)) {
                return bad(format!("score {:?} for {:?}", v.score, v.word));
            }
        }
        if !self
            .vocabulary
            .iter()
            .any(|v| v.score.is_some_and(|s| !self.lens.excludes(s)))
        {
            return bad("no scored word survives the lens".into());
        }
        let window = -self.window_hours..=self.window_hours;
        if let Some((b, _)) = self
            .effect_profile
            .iter()
            .find(|(b, s)| !window.contains(b) || !s.is_finite())
        {
            return bad(format!("effect profile entry for bin {b}"));
        }
        for (w, m) in &self.frequency_effects {
            if !seen.contains(w.as_str()) {
                return bad(format!("frequency effect for unknown word {w:?}"));
            }
            if m.iter()
                .any(|(b, f)| !window.contains(b) || !(f.is_finite() && *f > 0.0))
            {
                return bad(format!("frequency effect for {w:?}"));
            }
        }
        if self.parks.is_empty() {
            return bad("scenario needs at least one park".into());
        }
        let mut ids = BTreeSet::new();
        for p in &self.parks {
            if !ids.insert(&p.id) {
                return bad(format!("duplicate park id {:?}", p.id));
            }
            if let Some(t) = tokens(&p.name).find(|t| seen.contains(t.as_str())) {
                return bad(format!("park name token {t:?} is also a vocabulary word"));
            }
            if !(-1.0..1.0).contains(&p.ndvi) {
                return bad(format!("park ndvi {}", p.ndvi));
            }
        }
        for e in self
            .parks
            .iter()
            .map(|p| &p.extent)
            .chain(&self.water)
            .chain([&self.elsewhere])
        {
            if !(e[0] < e[2] && e[1] < e[3]) {
                return bad(format!("degenerate extent {e:?}"));
            }
        }
        let overlaps = |a: &[f64; 4], b: &[f64; 4]| a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3];
        if self.parks.iter().any(|p| overlaps(&p.extent, &self.elsewhere)) {
            return bad("the out-of-park extent overlaps a park".into());
        }
        for (i, a) in self.parks.iter().enumerate() {
            if self.parks[i + 1..].iter().any(|b| overlaps(&a.extent, &b.extent)) {
                return bad(format!("park {:?} overlaps another park", a.id));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        self.validate()?;
        let words: Vec<String> = self.vocabulary.iter().map(|v| v.word.clone()).collect();
        let scores: Vec<Option<f64>> = self
            .vocabulary
            .iter()
            .map(|v| v.score.filter(|&s| !self.lens.excludes(s)))
            .collect();
        let base = normalized(&self.vocabulary.iter().map(|v| v.weight).collect::<Vec<_>>());
        let h0 = expectation(&base, &scores, |_| true).expect("validated").1;
        let mut bins = BTreeMap::new();
        for b in -self.window_hours..=self.window_hours {
            let weights: Vec<f64> = self
                .vocabulary
                .iter()
                .zip(&base)
                .map(|(v, p)| {
                    p * self
                        .frequency_effects
                        .get(&v.word)
                        .and_then(|m| m.get(&b))
                        .unwrap_or(&1.0)
                })
                .collect();
            let q = normalized(&weights);
            let shift = self.effect_profile.get(&b).copied().unwrap_or(0.0);
            let (q, lambda) = tilt(&q, &scores, b, h0, h0 + shift)?;
            let expected_sentiment = expectation(&q, &scores, |_| true).expect("validated").1;
            bins.insert(
                b,
                (
                    q,
                    BinTruth {
                        shift,
                        expected_sentiment,
                        lambda,
                    },
                ),
            );
        }
        Ok(Model {
            words,
            scores,
            baseline_sentiment: h0,
            bins,
        })
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        Lexicon::from_entries(self.vocabulary.iter().filter_map(|v| {
            v.score.map(|score| LexiconEntry {
                word: v.word.clone(),
                score,
            })
        }))
    }

    pub fn facilities(&self) -> Result<Vec<ParkFacility>> {
        self.parks
            .iter()
            .map(|p| {
                Ok(ParkFacility {
                    id: p.id.clone(),
                    name: p.name.clone(),
                    category: p.category.clone(),
                    polygons: vec![Polygon::new(extent_ring(&p.extent), vec![])?],
                    acres: acres_of(&p.extent),
                })
            })
            .collect()
    }

    pub fn planted_duration(&self) -> i64 {
        (1..=self.window_hours)
            .take_while(|b| self.effect_profile.get(b).is_some_and(|s| *s > 0.0))
            .count() as i64
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub messages: Vec<MessageRecord>,
    pub facilities: Vec<ParkFacility>,
    pub lexicon: Lexicon,
    pub truth: GroundTruth,
    pub raster: RasterGrid,
    pub water: Vec<Polygon>,
}

/// Paths written by [`SynthOutput::write`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub facilities: PathBuf,
    pub lexicon: PathBuf,
    pub truth: PathBuf,
    pub raster: PathBuf,
    pub water: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> SynthFiles {
        SynthFiles {
            corpus: dir.join("corpus.jsonl"),
            facilities: dir.join("facilities.geojson"),
            lexicon: dir.join("lexicon.csv"),
            truth: dir.join("truth.json"),
            raster: dir.join("raster.json"),
            water: dir.join("water.geojson"),
        }
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, e: &[f64; 4]) -> (f64, f64) {
    (rng.gen_range(e[1]..e[3]), rng.gen_range(e[0]..e[2]))
}

fn sample_text(rng: &mut ChaCha8Rng, words: &[String], dist: &WeightedIndex<f64>, n: (usize, usize)) -> String {
    let k = rng.gen_range(n.0..=n.1);
    (0..k)
        .map(|_| words[dist.sample(rng)].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(scenario: &Scenario) -> Result<SynthOutput> {
    let model = scenario.model()?;
    let facilities = scenario.facilities()?;
    let tz = FixedOffset::east_opt(scenario.utc_offset_hours * 3600)
        .ok_or_else(|| Error::InvalidConfig(format!("utc offset {}", scenario.utc_offset_hours)))?;
    let dists: BTreeMap<i64, WeightedIndex<f64>> = model
        .bins
        .iter()
        .map(|(b, (q, _))| {
            Ok((
                *b,
                WeightedIndex::new(q).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            ))
        })
        .collect::<Result<_>>()?;
    let poisson = (scenario.messages_per_user_per_bin > 0.0)
        .then(|| Poisson::new(scenario.messages_per_user_per_bin).expect("validated rate"));
    let mut rng = run_rng(derive_seed(scenario.seed, STREAM_SYNTH), 0);
    let mut messages = Vec::new();
    let open = NaiveTime::from_hms_opt(10, 0, 0).expect("valid time");
    for u in 0..scenario.users {
        let user_id = format!("u{u:05}");
        let park = &scenario.parks[u % scenario.parks.len()];
        let day = scenario.start_date + Duration::days((u % 7) as i64);
        let local = day.and_time(open) + Duration::seconds(rng.gen_range(0..4 * 3600));
        let exposure = tz
            .from_local_datetime(&local)
            .single()
            .expect("fixed offsets are unambiguous");
        let mut user_msgs = Vec::new();
        let (lat, lon) = uniform_in(&mut rng, &park.extent);
        user_msgs.push((
            exposure,
            sample_text(&mut rng, &model.words, &dists[&0], scenario.words_per_message),
            lat,
            lon,
        ));
        for b in (-scenario.window_hours..=scenario.window_hours).filter(|&b| b != 0) {
            let n = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
            for _ in 0..n {
                // seconds in ((|b|-1)h, |b|h], signed by b
                let secs = rng.gen_range((b.abs() - 1) * 3600 + 1..=b.abs() * 3600) * b.signum();
                let in_park = (1..=6).contains(&b) && rng.gen_bool(scenario.secondary_in_park_prob);
                let (lat, lon) = uniform_in(&mut rng, if in_park { &park.extent } else { &scenario.elsewhere });
                let text = sample_text(&mut rng, &model.words, &dists[&b], scenario.words_per_message);
                user_msgs.push((exposure + Duration::seconds(secs), text, lat, lon));
            }
        }
        user_msgs.sort_by_key(|m| m.0);
        messages.extend(user_msgs.into_iter().map(|(timestamp, text, lat, lon)| MessageRecord {
            id: String::new(),
            user_id: user_id.clone(),
            timestamp,
            text,
            language: "en".into(),
            lat,
            lon,
        }));
    }
    for (i, m) in messages.iter_mut().enumerate() {
        m.id = format!("m{i:08}");
    }
    let water: Vec<Polygon> = scenario
        .water
        .iter()
        .map(|e| Polygon::new(extent_ring(e), vec![]))
        .collect::<Result<_>>()?;
    let raster = paint_raster(scenario)?;
    let truth = GroundTruth {
        seed: scenario.seed,
        baseline_sentiment: model.baseline_sentiment,
        lens: scenario.lens,
        window_hours: scenario.window_hours,
        planted_duration: scenario.planted_duration(),
        users: scenario.users,
        messages: messages.len(),
        bins: model.bins.into_iter().map(|(b, (_, t))| (b, t)).collect(),
    };
    Ok(SynthOutput {
        messages,
        facilities,
        lexicon: scenario.lexicon()?,
        truth,
        raster,
        water,
    })
}

const PIXEL_DEG: f64 = 0.0005;

fn paint_raster(scenario: &Scenario) -> Result<RasterGrid> {
    let pad = 4.0 * PIXEL_DEG;
    let mut e = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in &scenario.parks {
        e = [
            e[0].min(p.extent[0]),
            e[1].min(p.extent[1]),
            e[2].max(p.extent[2]),
            e[3].max(p.extent[3]),
        ];
    }
    let origin = [e[0] - pad, e[3] + pad];
    let width = ((e[2] - e[0] + 2.0 * pad) / PIXEL_DEG).ceil() as usize;
    let height = ((e[3] - e[1] + 2.0 * pad) / PIXEL_DEG).ceil() as usize;
    let inside = |x: &[f64; 4], lon: f64, lat: f64| lon >= x[0] && lon <= x[2] && lat >= x[1] && lat <= x[3];
    let mut rng = run_rng(derive_seed(scenario.seed, STREAM_SYNTH + 1), 0);
    let (mut nir, mut red) = (Vec::with_capacity(width * height), Vec::with_capacity(width * height));
    for row in 0..height {
        for col in 0..width {
            let lon = origin[0] + (col as f64 + 0.5) * PIXEL_DEG;
            let lat = origin[1] - (row as f64 + 0.5) * PIXEL_DEG;
            let base = if scenario.water.iter().any(|w| inside(w, lon, lat)) {
                -0.3
            } else {
                scenario
                    .parks
                    .iter()
                    .find(|p| inside(&p.extent, lon, lat))
                    .map_or(0.05, |p| p.ndvi)
            };
            let v: f64 = (base + rng.gen_range(-0.05..0.05)).clamp(-0.95, 0.95);
            let r = rng.gen_range(0.08..0.12);
            red.push(r);
            nir.push(r * (1.0 + v) / (1.0 - v));
        }
    }
    RasterGrid::new(width, height, origin, [PIXEL_DEG, -PIXEL_DEG], None, nir, red)
}

impl SynthOutput {
    /// Every output as (file name, contents), in a fixed order.
    pub fn files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut corpus = Vec::new();
        for m in &self.messages {
            serde_json::to_writer(&mut corpus, m)?;
            corpus.push(b'\n');
        }
        let mut lex = csv::Writer::from_writer(Vec::new());
        lex.write_record(["word", "score"])?;
        for e in self.lexicon.entries() {
            lex.write_record([e.word, e.score.to_string()])?;
        }
        let lex = lex.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let pretty =
            |v: &serde_json::Value| -> Result<Vec<u8>> { Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes()) };
        let mut files = vec![
            ("corpus.jsonl".to_string(), corpus),
            (
                "facilities.geojson".to_string(),
                pretty(&facilities_to_geojson(&self.facilities))?,
            ),
            ("lexicon.csv".to_string(), lex),
            ("truth.json".to_string(), pretty(&serde_json::to_value(&self.truth)?)?),
            ("water.geojson".to_string(), pretty(&polygons_to_geojson(&self.water))?),
        ];
        files.extend(self.raster.csv_files("raster")?);
        Ok(files)
    }

    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files()? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(SynthFiles::in_dir(dir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::hedonics::sentiment;

    fn two_word() -> Scenario {
        Scenario {
            vocabulary: vec![
                VocabEntry {
                    word: "good".into(),
                    score: Some(8.0),
                    weight: 1.0,
                },
                VocabEntry {
                    word: "bad".into(),
                    score: Some(2.0),
                    weight: 1.0,
                },
            ],
            effect_profile: [(0, 0.6)].into_iter().collect(),
            window_hours: 2,
            ..Scenario::default()
        }
    }

    #[test]
    fn two_word_tilt() {
        let m = two_word().model().unwrap();
        assert_eq!(m.baseline_sentiment, 5.0);
        let (q, t) = &m.bins[&0];
        assert!((q[0] - 0.6).abs() < 1e-15 && (q[1] - 0.4).abs() < 1e-15);
        assert!((t.expected_sentiment - 5.6).abs() < 1e-12);
        assert!((t.lambda - 0.2).abs() < 1e-15);
        assert_eq!(m.bins[&1].0, vec![0.5, 0.5]);
    }

    #[test]
    fn infeasible_tilt() {
        let s = Scenario {
            effect_profile: [(0, 3.5)].into_iter().collect(),
            ..two_word()
        };
        match s.model() {
            Err(Error::InfeasibleTilt { bin, max, min, .. }) => {
                assert_eq!(bin, 0);
                assert_eq!((max, min), (3.0, -3.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_profile_is_flat() {
        let s = Scenario {
            effect_profile: BTreeMap::new(),
            ..Scenario::default()
        };
        let m = s.model().unwrap();
        for (_, t) in m.bins.values() {
            assert!((t.expected_sentiment - m.baseline_sentiment).abs() < 1e-12);
        }
        assert_eq!(s.planted_duration(), 0);
    }

    #[test]
    fn default_targets_hold_with_frequency_effects() {
        let s = Scenario {
            frequency_effects: [("w47".to_string(), [(0, 3.0), (2, 0.5)].into_iter().collect())]
                .into_iter()
                .collect(),
            ..Scenario::default()
        };
        let m = s.model().unwrap();
        for (b, (q, t)) in &m.bins {
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(
                (t.expected_sentiment - (m.baseline_sentiment + t.shift)).abs() < 1e-12,
                "bin {b}"
            );
        }
        assert_eq!(s.planted_duration(), 3);
    }

    #[test]
    fn law_of_large_numbers() {
        let s = Scenario::default();
        let m = s.model().unwrap();
        let lex = crate::lexicon::apply_lens(&s.lexicon().unwrap(), &s.lens);
        let mut rng = run_rng(99, 0);
        for b in [-3, 0, 2] {
            let (q, t) = &m.bins[&b];
            let dist = WeightedIndex::new(q).unwrap();
            let mut text = String::new();
            let mut matched = 0;
            while matched < 1_000_000 {
                let i = dist.sample(&mut rng);
                matched += usize::from(m.scores[i].is_some());
                text.push_str(&m.words[i]);
                text.push(' ');
            }
            let h = sentiment(&tokenize(&text), &lex).unwrap();
            assert!(
                (h - t.expected_sentiment).abs() < 0.01,
                "bin {b}: {h} vs {}",
                t.expected_sentiment
            );
        }
    }

    #[test]
    fn corpus_layout() {
        let s = Scenario {
            users: 12,
            window_hours: 8,
            ..Scenario::default()
        };
        let out = generate(&s).unwrap();
        assert_eq!(out.truth.messages, out.messages.len());
        assert_eq!(out.facilities.len(), 3);
        let in_park: Vec<_> = out
            .messages
            .iter()
            .filter(|m| {
                out.facilities
                    .iter()
                    .any(|f| f.contains(crate::geo::GeoPoint::new(m.lat, m.lon)))
            })
            .collect();
        assert!(in_park.len() >= 12);
        let ids: BTreeSet<_> = out.messages.iter().map(|m| &m.id).collect();
        assert_eq!(ids.len(), out.messages.len());
    }

    #[test]
    fn rejects_bad_scenarios() {
        let clash = Scenario {
            vocabulary: vec![VocabEntry {
                word: "park".into(),
                score: Some(7.0),
                weight: 1.0,
            }],
            ..Scenario::default()
        };
        assert!(clash.validate().is_err());
        let lensed = Scenario {
            vocabulary: vec![VocabEntry {
                word: "meh".into(),
                score: Some(5.0),
                weight: 1.0,
            }],
            ..Scenario::default()
        };
        assert!(lensed.validate().is_err());
        assert!(Scenario {
            users: 0,
            ..Scenario::default()
        }
        .validate()
        .is_err());
    }
}
