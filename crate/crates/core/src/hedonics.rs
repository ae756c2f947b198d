//! Pooled lexicon sentiment, bootstrap intervals, change in sentiment and
//! duration of elevated sentiment.
//!
//! Sentiment of a set of messages is the frequency-weighted mean score of
//! their lexicon-matched words, `Σ vᵢ fᵢ / Σ fᵢ`. Uncertainty comes from
//! repeatedly scoring a random fraction of the messages drawn without
//! replacement; intervals are the 2.5th/97.5th percentiles of the runs.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::WordTable;
use crate::error::{Error, Result};
use crate::exposure::{BinnedCorpus, FacilityFilter, BASELINE_BINS};
use crate::lexicon::Lexicon;
use crate::seeding::{
    derive_seed, run_rng, STREAM_BASELINE, STREAM_CURVE, STREAM_DURATION, STREAM_EXPOSED, STREAM_SINGLE,
};

/// Estimates built from this many matched words or fewer are flagged.
pub const LOW_SAMPLE_WORDS: u64 = 1000;
pub const ALPHA: f64 = 0.05;

/// `Σ vᵢ fᵢ` and `Σ fᵢ` over lexicon-matched words.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub weighted: f64,
    pub matched: u64,
}

impl Tally {
    pub fn of(words: &WordTable, lexicon: &Lexicon) -> Tally {
        let mut t = Tally::default();
        for (w, n) in words.iter() {
            if let Some(v) = lexicon.get(w) {
                t.weighted += v * n as f64;
                t.matched += n;
            }
        }
        t
    }

    pub fn sentiment(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.weighted / self.matched as f64)
    }
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            weighted: self.weighted + o.weighted,
            matched: self.matched + o.matched,
        }
    }
}

/// Weighted average score of the lexicon-matched words; unmatched words are ignored.
pub fn sentiment(words: &WordTable, lexicon: &Lexicon) -> Result<f64> {
    Tally::of(words, lexicon).sentiment().ok_or(Error::NoMatchedWords)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub runs: usize,
    pub fraction: f64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            runs: 100,
            fraction: 0.8,
            seed: 0,
            workers: None,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fraction {} not in (0, 1]",
                self.fraction
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        BootstrapConfig { seed, ..*self }
    }

    /// Messages drawn per run: `⌊fraction·n⌋`, at least one.
    pub fn subsample_size(&self, n: usize) -> usize {
        ((self.fraction * n as f64).floor() as usize).clamp(1, n.max(1))
    }
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Pooled tally of one random subsample. Indices are summed in ascending
/// order so that a full draw reproduces the full-set sum bit for bit.
fn subsample(tallies: &[Tally], k: usize, seed: u64, run: u64) -> Tally {
    let mut rng = run_rng(seed, run);
    let mut idx = index::sample(&mut rng, tallies.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().fold(Tally::default(), |acc, i| acc + tallies[i])
}

fn full_tally(tallies: &[Tally]) -> Tally {
    tallies.iter().fold(Tally::default(), |acc, t| acc + *t)
}

fn tallies(messages: &[&WordTable], lexicon: &Lexicon) -> Vec<Tally> {
    messages.iter().map(|w| Tally::of(w, lexicon)).collect()
}

/// Linear-interpolation percentile of an ascending slice, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn interval(samples: &[f64]) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    (percentile(&sorted, 0.025), percentile(&sorted, 0.975))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentEstimate {
    /// Mean of the bootstrap samples.
    pub mean: f64,
    /// Sentiment of the full message set.
    pub full: f64,
    /// One value per kept run, in run order.
    pub samples: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Matched words in the full set.
    pub n_words: u64,
    pub n_messages: usize,
    pub discarded_runs: usize,
    pub low_sample: bool,
}

fn estimate_from_tallies(tallies: &[Tally], cfg: &BootstrapConfig, stream_seed: u64) -> Result<SentimentEstimate> {
    cfg.validate()?;
    if tallies.is_empty() {
        return Err(Error::EmptyPool {
            what: "message set".into(),
            words: 0,
        });
    }
    let full = full_tally(tallies);
    let full_sentiment = full.sentiment().ok_or(Error::NoMatchedWords)?;
    let k = cfg.subsample_size(tallies.len());
    let runs: Vec<Option<f64>> = in_pool(cfg.workers, || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|r| subsample(tallies, k, stream_seed, r).sentiment())
            .collect()
    })?;
    let samples: Vec<f64> = runs.iter().flatten().copied().collect();
    if samples.is_empty() {
        return Err(Error::AllRunsDiscarded { runs: cfg.runs });
    }
    let (ci_low, ci_high) = interval(&samples);
    Ok(SentimentEstimate {
        mean: mean(&samples),
        full: full_sentiment,
        ci_low,
        ci_high,
        n_words: full.matched,
        n_messages: tallies.len(),
        discarded_runs: cfg.runs - samples.len(),
        low_sample: full.matched <= LOW_SAMPLE_WORDS,
        samples,
    })
}

pub fn bootstrap_sentiment(
    messages: &[&WordTable],
    lexicon: &Lexicon,
    cfg: &BootstrapConfig,
) -> Result<SentimentEstimate> {
    estimate_from_tallies(&tallies(messages, lexicon), cfg, derive_seed(cfg.seed, STREAM_SINGLE))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Two-sided one-sample t-test of `samples` against a zero mean.
///
/// Fewer than two samples never reject. Zero spread rejects exactly when the
/// mean is non-zero.
pub fn one_sample_t_test(samples: &[f64], alpha: f64) -> TTest {
    let n = samples.len();
    if n < 2 {
        return TTest {
            t: f64::NAN,
            df: 0.0,
            p_value: 1.0,
            reject: false,
        };
    }
    let m = mean(samples);
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let t = if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    let p_value = if t.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    TTest {
        t,
        df,
        p_value,
        reject: p_value < alpha,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSize {
    pub n_messages: usize,
    pub n_words: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEstimate {
    /// Mean of the bootstrapped (exposed − baseline) differences.
    pub delta_mean: f64,
    /// Difference of the full-set sentiments.
    pub full_delta: f64,
    pub samples: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub reject_null: bool,
    pub discarded_runs: usize,
    pub baseline: SetSize,
    pub exposed: SetSize,
}

fn diff_from_tallies(base: &[Tally], exposed: &[Tally], cfg: &BootstrapConfig) -> Result<DiffEstimate> {
    cfg.validate()?;
    for (what, set) in [("baseline", base), ("exposed set", exposed)] {
        if set.is_empty() {
            return Err(Error::EmptyPool {
                what: what.into(),
                words: 0,
            });
        }
    }
    let (full_b, full_e) = (full_tally(base), full_tally(exposed));
    let full_delta =
        full_e.sentiment().ok_or(Error::NoMatchedWords)? - full_b.sentiment().ok_or(Error::NoMatchedWords)?;
    let (kb, ke) = (cfg.subsample_size(base.len()), cfg.subsample_size(exposed.len()));
    let (seed_b, seed_e) = (
        derive_seed(cfg.seed, STREAM_BASELINE),
        derive_seed(cfg.seed, STREAM_EXPOSED),
    );
    let runs: Vec<Option<f64>> = in_pool(cfg.workers, || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|r| {
                let b = subsample(base, kb, seed_b, r).sentiment()?;
                let e = subsample(exposed, ke, seed_e, r).sentiment()?;
                Some(e - b)
            })
            .collect()
    })?;
    let samples: Vec<f64> = runs.iter().flatten().copied().collect();
    if samples.is_empty() {
        return Err(Error::AllRunsDiscarded { runs: cfg.runs });
    }
    let (ci_low, ci_high) = interval(&samples);
    let test = one_sample_t_test(&samples, ALPHA);
    Ok(DiffEstimate {
        delta_mean: mean(&samples),
        full_delta,
        ci_low,
        ci_high,
        t_statistic: test.t,
        p_value: test.p_value,
        reject_null: test.reject,
        discarded_runs: cfg.runs - samples.len(),
        baseline: SetSize {
            n_messages: base.len(),
            n_words: full_b.matched,
        },
        exposed: SetSize {
            n_messages: exposed.len(),
            n_words: full_e.matched,
        },
        samples,
    })
}

/// Bootstrapped exposed − baseline sentiment. Each run draws independent
/// subsamples of both sets.
pub fn change_in_sentiment(
    baseline: &[&WordTable],
    exposed: &[&WordTable],
    lexicon: &Lexicon,
    cfg: &BootstrapConfig,
) -> Result<DiffEstimate> {
    diff_from_tallies(&tallies(baseline, lexicon), &tallies(exposed, lexicon), cfg)
}

fn words_of<'a>(msgs: &[&'a crate::exposure::BinnedMessage]) -> Vec<&'a WordTable> {
    msgs.iter().map(|m| &m.words).collect()
}

/// Baseline (bins −6..−2) against the exposure bin for one filter.
pub fn exposure_change(
    binned: &BinnedCorpus,
    lexicon: &Lexicon,
    filter: &FacilityFilter,
    cfg: &BootstrapConfig,
) -> Result<DiffEstimate> {
    let base = binned.select(BASELINE_BINS, filter, true);
    let exposed = binned.select(0..=0, filter, true);
    change_in_sentiment(&words_of(&base), &words_of(&exposed), lexicon, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStep {
    pub bin: i64,
    /// `None` when the bin was empty or had nothing to score.
    pub estimate: Option<DiffEstimate>,
    pub elevated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationResult {
    pub hours: i64,
    pub include_secondary_in_park: bool,
    pub steps: Vec<DurationStep>,
}

/// Last consecutive post-exposure bin whose bootstrapped difference from the
/// baseline is positive and rejects the zero-mean t-test.
///
/// Secondary in-park messages are dropped from the post bins when
/// `include_secondary_in_park` is false. Bin `k` uses its own derived seed.
pub fn duration(
    binned: &BinnedCorpus,
    lexicon: &Lexicon,
    filter: &FacilityFilter,
    include_secondary_in_park: bool,
    cfg: &BootstrapConfig,
) -> Result<DurationResult> {
    cfg.validate()?;
    let base_msgs = binned.select(BASELINE_BINS, filter, true);
    let base = tallies(&words_of(&base_msgs), lexicon);
    let base_words: u64 = base_msgs.iter().map(|m| m.words.total()).sum();
    if base_words == 0 {
        return Err(Error::EmptyPool {
            what: "baseline".into(),
            words: 0,
        });
    }
    if full_tally(&base).matched == 0 {
        return Err(Error::NoMatchedWords);
    }
    let mut hours = 0;
    let mut steps = Vec::new();
    for k in 1..=binned.window_hours {
        let post = binned.select(k..=k, filter, include_secondary_in_park);
        let post = tallies(&words_of(&post), lexicon);
        let step_cfg = cfg.with_seed(derive_seed(cfg.seed, STREAM_DURATION + k as u64));
        let estimate = if post.is_empty() {
            None
        } else {
            match diff_from_tallies(&base, &post, &step_cfg) {
                Ok(d) => Some(d),
                Err(Error::NoMatchedWords | Error::AllRunsDiscarded { .. }) => None,
                Err(e) => return Err(e),
            }
        };
        let elevated = estimate.as_ref().is_some_and(|d| d.reject_null && d.delta_mean > 0.0);
        steps.push(DurationStep {
            bin: k,
            estimate,
            elevated,
        });
        if !elevated {
            break;
        }
        hours = k;
    }
    Ok(DurationResult {
        hours,
        include_secondary_in_park,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bin: i64,
    pub n_messages: usize,
    /// `None` marks a gap: no messages or no matched words.
    pub estimate: Option<SentimentEstimate>,
}

/// Bootstrapped sentiment for every bin of the window, in bin order.
pub fn sentiment_curve(
    binned: &BinnedCorpus,
    lexicon: &Lexicon,
    filter: &FacilityFilter,
    cfg: &BootstrapConfig,
) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for bin in binned.window() {
        let msgs = binned.select(bin..=bin, filter, true);
        let t = tallies(&words_of(&msgs), lexicon);
        let seed = derive_seed(cfg.seed, STREAM_CURVE.wrapping_add_signed(bin));
        let estimate = match estimate_from_tallies(&t, cfg, seed) {
            Ok(e) => Some(e),
            Err(Error::EmptyPool { .. } | Error::NoMatchedWords | Error::AllRunsDiscarded { .. }) => None,
            Err(e) => return Err(e),
        };
        out.push(CurvePoint {
            bin,
            n_messages: msgs.len(),
            estimate,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub runs: usize,
    pub delta_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_width: f64,
}

/// Repeats the change estimate at several run counts to show interval drift.
pub fn convergence(
    baseline: &[&WordTable],
    exposed: &[&WordTable],
    lexicon: &Lexicon,
    cfg: &BootstrapConfig,
    run_counts: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    let (b, e) = (tallies(baseline, lexicon), tallies(exposed, lexicon));
    run_counts
        .iter()
        .map(|&runs| {
            let d = diff_from_tallies(&b, &e, &BootstrapConfig { runs, ..*cfg })?;
            Ok(ConvergenceRow {
                runs,
                delta_mean: d.delta_mean,
                ci_low: d.ci_low,
                ci_high: d.ci_high,
                ci_width: d.ci_high - d.ci_low,
            })
        })
        .collect()
}
