//! Subcommand bodies: resolve config, read inputs, run a stage, commit outputs.

use std::path::PathBuf;

use chrono::DateTime;
use serde_json::{json, Value};

use greenspace::corpus::IngestConfig;
use greenspace::exposure::{diagnostics, BASELINE_BINS};
use greenspace::geo::{load_polygons, Polygon};
use greenspace::hedonics::{convergence, duration, sentiment_curve, DiffEstimate};
use greenspace::lexicon::park_name_stoplist;
use greenspace::seeding::{derive_seed, STREAM_BASELINE, STREAM_CURVE, STREAM_DURATION, STREAM_EXPOSED, STREAM_SYNTH};
use greenspace::synth::{generate, Scenario};
use greenspace::vegetation::{all_park_stats, category_report, write_report_csv, ParkVegStats, RasterGrid};
use greenspace::wordshift::{frequency_timeseries, word_shift};
use greenspace::Error;

use crate::output::{commit, num, Artifact, RunMeta};
use crate::pipeline;
use crate::{Cli, CliError, Command, DurationVariant, GlobalArgs, Outcome, Paths, RunConfig, ScoringArgs};

pub fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { input, start, end } => ingest(g, input, start, end),
        Command::Join {
            corpus,
            facilities,
            no_user_filter,
        } => join(g, corpus, facilities, no_user_filter),
        Command::Bin { annotated } => bin(g, annotated),
        Command::Curve { scoring } => curve(g, &scoring),
        Command::Change { scoring, convergence } => change(g, &scoring, &convergence),
        Command::Duration { scoring, variant } => duration_cmd(g, &scoring, variant),
        Command::Shift { scoring } => shift(g, &scoring),
        Command::Series {
            binned,
            words,
            smoothing,
            span,
        } => series(g, binned, &words, smoothing, span),
        Command::Veg {
            raster,
            facilities,
            water,
        } => veg(g, raster, facilities, water),
        Command::Report { stats, facilities } => report(g, stats, facilities),
        Command::Synth { scenario, users, null } => synth(g, scenario, users, null),
    }
}

fn config_value(rc: &RunConfig) -> Value {
    serde_json::to_value(rc).expect("config serializes")
}

fn emit(
    rc: &RunConfig,
    command: &str,
    inputs: Vec<PathBuf>,
    artifacts: &[Artifact],
    streams: Value,
    details: Value,
) -> Result<Outcome, CliError> {
    let meta = RunMeta {
        command: command.into(),
        inputs,
        config: config_value(rc),
        seed: rc.bootstrap.seed,
        streams,
        details,
    };
    Ok(Outcome {
        written: commit(&rc.out_dir(), artifacts, &meta)?,
    })
}

fn ingest(
    g: &GlobalArgs,
    input: Option<PathBuf>,
    start: Option<String>,
    end: Option<String>,
) -> Result<Outcome, CliError> {
    let rc = RunConfig::resolve(
        g,
        Paths {
            input,
            ..Paths::default()
        },
    )?;
    let input = rc.input(|p| &p.input, "input")?;
    let parse = |s: &Option<String>, flag: &str| {
        s.as_deref()
            .map(|s| DateTime::parse_from_rfc3339(s).map_err(|e| CliError::Usage(format!("--{flag} {s:?}: {e}"))))
            .transpose()
    };
    let cfg = IngestConfig {
        strict: rc.strict,
        window_start: parse(&start, "start")?,
        window_end: parse(&end, "end")?,
    };
    let ingested = pipeline::ingest_path(&input, &cfg)?;
    let corpus = Artifact::jsonl("corpus.jsonl", &ingested.messages)?;
    emit(&rc, "ingest", vec![input], &[corpus], json!([]), json!(ingested.report))
}

fn join(
    g: &GlobalArgs,
    corpus: Option<PathBuf>,
    facilities: Option<PathBuf>,
    no_user_filter: bool,
) -> Result<Outcome, CliError> {
    let mut rc = RunConfig::resolve(
        g,
        Paths {
            corpus,
            facilities,
            ..Paths::default()
        },
    )?;
    if no_user_filter {
        rc.user_filter = None;
    }
    let corpus = rc.input(|p| &p.corpus, "corpus")?;
    let fac_path = rc.input(|p| &p.facilities, "facilities")?;
    let messages = pipeline::read_jsonl(&corpus)?;
    let parks = pipeline::facilities(&fac_path)?;
    let (annotated, report) = pipeline::join(&messages, &parks, &rc);
    let stoplist = park_name_stoplist(&parks);
    let details = json!({
        "messages_in": messages.len(),
        "messages_out": annotated.len(),
        "in_facility": annotated.iter().filter(|m| m.facility.is_some()).count(),
        "stoplist_words": stoplist.len(),
        "user_filter": report,
    });
    let artifacts = [
        Artifact::jsonl("annotated.jsonl", &annotated)?,
        Artifact::new("stoplist.txt", pipeline::stoplist_text(&stoplist)),
    ];
    emit(&rc, "join", vec![corpus, fac_path], &artifacts, json!([]), details)
}

fn bin(g: &GlobalArgs, annotated: Option<PathBuf>) -> Result<Outcome, CliError> {
    let rc = RunConfig::resolve(
        g,
        Paths {
            annotated,
            ..Paths::default()
        },
    )?;
    let path = rc.input(|p| &p.annotated, "annotated")?;
    let messages = pipeline::read_jsonl(&path)?;
    let (binned, events) = pipeline::bin(&messages, &rc)?;
    let details = json!(diagnostics(&binned, &events));
    let out = Artifact::json("binned.json", &binned.to_json())?;
    emit(&rc, "bin", vec![path], &[out], json!([]), details)
}

/// Binned corpus and prepared lexicon shared by the scoring subcommands.
struct Scoring {
    rc: RunConfig,
    binned: greenspace::exposure::BinnedCorpus,
    lexicon: greenspace::lexicon::Lexicon,
    inputs: Vec<PathBuf>,
}

fn scoring(g: &GlobalArgs, args: &ScoringArgs) -> Result<Scoring, CliError> {
    let rc = RunConfig::resolve(g, args.paths())?;
    let binned_path = rc.input(|p| &p.binned, "binned")?;
    let lex_path = rc.input(|p| &p.lexicon, "lexicon")?;
    let stop_path = rc.optional_input(|p| &p.stoplist)?;
    let stoplist = stop_path.as_deref().map(pipeline::read_stoplist).transpose()?;
    let lexicon = pipeline::lexicon(&lex_path, stoplist.as_ref(), &rc)?;
    let binned = pipeline::binned(&binned_path)?;
    if binned.messages.is_empty() {
        return Err(Error::EmptyPool {
            what: "binned corpus".into(),
            words: 0,
        }
        .into());
    }
    let inputs = [Some(binned_path), Some(lex_path), stop_path]
        .into_iter()
        .flatten()
        .collect();
    Ok(Scoring {
        rc,
        binned,
        lexicon,
        inputs,
    })
}

fn diff_streams(seed: u64) -> Value {
    json!([
        {"label": "baseline", "id": STREAM_BASELINE, "derived_seed": derive_seed(seed, STREAM_BASELINE)},
        {"label": "exposed", "id": STREAM_EXPOSED, "derived_seed": derive_seed(seed, STREAM_EXPOSED)},
    ])
}

fn curve(g: &GlobalArgs, args: &ScoringArgs) -> Result<Outcome, CliError> {
    let s = scoring(g, args)?;
    let points = sentiment_curve(&s.binned, &s.lexicon, &s.rc.filter, &s.rc.bootstrap)?;
    if points.iter().all(|p| p.estimate.is_none()) {
        return Err(Error::NoMatchedWords.into());
    }
    let header = [
        "bin",
        "n_messages",
        "n_words",
        "mean",
        "full",
        "ci_low",
        "ci_high",
        "low_sample",
        "discarded_runs",
    ];
    let rows = points
        .iter()
        .map(|p| {
            let e = p.estimate.as_ref();
            vec![
                p.bin.to_string(),
                p.n_messages.to_string(),
                e.map(|e| e.n_words.to_string()).unwrap_or_default(),
                num(e.map(|e| e.mean)),
                num(e.map(|e| e.full)),
                num(e.map(|e| e.ci_low)),
                num(e.map(|e| e.ci_high)),
                e.map(|e| e.low_sample.to_string()).unwrap_or_default(),
                e.map(|e| e.discarded_runs.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let seed = s.rc.bootstrap.seed;
    let streams = json!(s
        .binned
        .window()
        .map(|b| json!({"bin": b, "id": STREAM_CURVE.wrapping_add_signed(b), "derived_seed": derive_seed(seed, STREAM_CURVE.wrapping_add_signed(b))}))
        .collect::<Vec<_>>());
    let gaps: Vec<i64> = points.iter().filter(|p| p.estimate.is_none()).map(|p| p.bin).collect();
    let out = Artifact::csv("curve.csv", &header, rows)?;
    emit(
        &s.rc,
        "curve",
        s.inputs,
        &[out],
        streams,
        json!({"filter": s.rc.filter.label(), "gaps": gaps}),
    )
}

pub const CHANGE_HEADER: [&str; 15] = [
    "filter",
    "delta_mean",
    "full_delta",
    "ci_low",
    "ci_high",
    "t_statistic",
    "p_value",
    "reject_null",
    "baseline_messages",
    "baseline_words",
    "exposed_messages",
    "exposed_words",
    "runs",
    "fraction",
    "discarded_runs",
];

pub fn change_row(label: &str, d: &DiffEstimate, rc: &RunConfig) -> Vec<String> {
    vec![
        label.to_string(),
        d.delta_mean.to_string(),
        d.full_delta.to_string(),
        d.ci_low.to_string(),
        d.ci_high.to_string(),
        d.t_statistic.to_string(),
        d.p_value.to_string(),
        d.reject_null.to_string(),
        d.baseline.n_messages.to_string(),
        d.baseline.n_words.to_string(),
        d.exposed.n_messages.to_string(),
        d.exposed.n_words.to_string(),
        rc.bootstrap.runs.to_string(),
        rc.bootstrap.fraction.to_string(),
        d.discarded_runs.to_string(),
    ]
}

fn change(g: &GlobalArgs, args: &ScoringArgs, counts: &[usize]) -> Result<Outcome, CliError> {
    let s = scoring(g, args)?;
    let (rows, skipped) = pipeline::change_rows(&s.binned, &s.lexicon, &s.rc)?;
    let mut artifacts = vec![Artifact::csv(
        "change.csv",
        &CHANGE_HEADER,
        rows.iter().map(|(l, d)| change_row(l, d, &s.rc)).collect(),
    )?];
    if !counts.is_empty() {
        if counts.contains(&0) {
            return Err(CliError::Usage("--convergence run counts must be >= 1".into()));
        }
        let mut conv_rows = Vec::new();
        for f in pipeline::change_filters(&s.binned, &s.rc) {
            if !rows.iter().any(|(l, _)| *l == f.label()) {
                continue;
            }
            let words = |bins| {
                s.binned
                    .select(bins, &f, true)
                    .into_iter()
                    .map(|m| &m.words)
                    .collect::<Vec<_>>()
            };
            let conv = convergence(
                &words(BASELINE_BINS),
                &words(0..=0),
                &s.lexicon,
                &s.rc.bootstrap,
                counts,
            )?;
            conv_rows.extend(conv.into_iter().map(|c| {
                vec![
                    f.label(),
                    c.runs.to_string(),
                    c.delta_mean.to_string(),
                    c.ci_low.to_string(),
                    c.ci_high.to_string(),
                    c.ci_width.to_string(),
                ]
            }));
        }
        artifacts.push(Artifact::csv(
            "change_convergence.csv",
            &["filter", "runs", "delta_mean", "ci_low", "ci_high", "ci_width"],
            conv_rows,
        )?);
    }
    let details =
        json!({"skipped": skipped.iter().map(|(f, why)| json!({"filter": f, "reason": why})).collect::<Vec<_>>()});
    emit(
        &s.rc,
        "change",
        s.inputs,
        &artifacts,
        diff_streams(s.rc.bootstrap.seed),
        details,
    )
}

fn duration_cmd(g: &GlobalArgs, args: &ScoringArgs, variant: DurationVariant) -> Result<Outcome, CliError> {
    let s = scoring(g, args)?;
    let variants: &[bool] = match variant {
        DurationVariant::With => &[true],
        DurationVariant::Without => &[false],
        DurationVariant::Both => &[true, false],
    };
    let header = [
        "include_secondary_in_park",
        "bin",
        "delta_mean",
        "ci_low",
        "ci_high",
        "t_statistic",
        "p_value",
        "reject_null",
        "elevated",
        "exposed_messages",
        "duration_hours",
    ];
    let (mut rows, mut hours) = (Vec::new(), serde_json::Map::new());
    for &include in variants {
        let r = duration(&s.binned, &s.lexicon, &s.rc.filter, include, &s.rc.bootstrap)?;
        hours.insert(
            if include { "with_secondary" } else { "without_secondary" }.into(),
            json!(r.hours),
        );
        for step in &r.steps {
            let e = step.estimate.as_ref();
            rows.push(vec![
                include.to_string(),
                step.bin.to_string(),
                num(e.map(|e| e.delta_mean)),
                num(e.map(|e| e.ci_low)),
                num(e.map(|e| e.ci_high)),
                num(e.map(|e| e.t_statistic)),
                num(e.map(|e| e.p_value)),
                e.map(|e| e.reject_null.to_string()).unwrap_or_default(),
                step.elevated.to_string(),
                e.map(|e| e.exposed.n_messages.to_string()).unwrap_or_default(),
                r.hours.to_string(),
            ]);
        }
    }
    let seed = s.rc.bootstrap.seed;
    let streams = json!((1..=s.binned.window_hours)
        .map(|k| json!({"bin": k, "id": STREAM_DURATION + k as u64, "derived_seed": derive_seed(seed, STREAM_DURATION + k as u64)}))
        .collect::<Vec<_>>());
    let out = Artifact::csv("duration.csv", &header, rows)?;
    emit(
        &s.rc,
        "duration",
        s.inputs,
        &[out],
        streams,
        json!({"filter": s.rc.filter.label(), "hours": hours}),
    )
}

fn shift(g: &GlobalArgs, args: &ScoringArgs) -> Result<Outcome, CliError> {
    let s = scoring(g, args)?;
    let table = |bins| {
        greenspace::corpus::WordTable::merged(s.binned.select(bins, &s.rc.filter, true).into_iter().map(|m| &m.words))
    };
    let (reference, comparison) = (table(BASELINE_BINS), table(0..=0));
    for (what, t) in [("baseline", &reference), ("exposure bin", &comparison)] {
        if t.is_empty() {
            return Err(Error::EmptyPool {
                what: what.into(),
                words: 0,
            }
            .into());
        }
    }
    let ws = word_shift(&reference, &comparison, &s.lexicon)?;
    let header = [
        "rank",
        "word",
        "score",
        "polarity",
        "direction",
        "p_ref",
        "p_comp",
        "contribution",
        "cumulative",
    ];
    let mut cumulative = 0.0;
    let rows = ws
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            cumulative += e.contribution;
            vec![
                (i + 1).to_string(),
                e.word.clone(),
                e.score.to_string(),
                e.polarity.symbol().to_string(),
                serde_json::to_value(e.direction)
                    .expect("enum")
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                e.p_ref.to_string(),
                e.p_comp.to_string(),
                e.contribution.to_string(),
                cumulative.to_string(),
            ]
        })
        .collect();
    let details = json!({
        "filter": s.rc.filter.label(),
        "denominator": "lexicon_matched",
        "h_ref": ws.h_ref,
        "h_comp": ws.h_comp,
        "difference": ws.h_comp - ws.h_ref,
        "sum_of_contributions": ws.total(),
        "ref_matched": ws.ref_matched,
        "comp_matched": ws.comp_matched,
    });
    let out = Artifact::csv("shift.csv", &header, rows)?;
    emit(&s.rc, "shift", s.inputs, &[out], json!([]), details)
}

fn series(
    g: &GlobalArgs,
    binned: Option<PathBuf>,
    words: &[String],
    smoothing: Option<usize>,
    span: Option<i64>,
) -> Result<Outcome, CliError> {
    let mut rc = RunConfig::resolve(
        g,
        Paths {
            binned,
            ..Paths::default()
        },
    )?;
    rc.smoothing = smoothing.unwrap_or(rc.smoothing);
    rc.span = span.unwrap_or(rc.span);
    let path = rc.input(|p| &p.binned, "binned")?;
    let binned = pipeline::binned(&path)?;
    let mut rows = Vec::new();
    let mut means = serde_json::Map::new();
    for w in words {
        let s = frequency_timeseries(&binned, w, rc.smoothing, rc.span, &rc.filter)?;
        if s.window_mean.is_none() {
            return Err(Error::EmptyPool {
                what: "frequency window".into(),
                words: 0,
            }
            .into());
        }
        means.insert(s.word.clone(), json!(s.window_mean));
        for p in &s.points {
            rows.push(vec![
                s.word.clone(),
                p.bin.to_string(),
                num(p.raw),
                num(p.smoothed),
                num(s.window_mean),
            ]);
        }
    }
    let out = Artifact::csv("series.csv", &["word", "bin", "raw", "smoothed", "window_mean"], rows)?;
    let details = json!({"filter": rc.filter.label(), "denominator": "all_tokens", "window_means": means});
    emit(&rc, "series", vec![path], &[out], json!([]), details)
}

pub const VEG_HEADER: [&str; 8] = [
    "facility_id",
    "mean_ndvi",
    "percent_vegetated",
    "pixels_total",
    "pixels_water",
    "pixels_nodata",
    "pixels_valid",
    "pixels_vegetated",
];

fn veg(
    g: &GlobalArgs,
    raster: Option<PathBuf>,
    facilities: Option<PathBuf>,
    water: Option<PathBuf>,
) -> Result<Outcome, CliError> {
    let rc = RunConfig::resolve(
        g,
        Paths {
            raster,
            facilities,
            water,
            ..Paths::default()
        },
    )?;
    let raster_path = rc.input(|p| &p.raster, "raster")?;
    let fac_path = rc.input(|p| &p.facilities, "facilities")?;
    let water_path = rc.optional_input(|p| &p.water)?;
    let raster = RasterGrid::load(&raster_path).map_err(|e| match e {
        Error::Io(io) => CliError::input(&raster_path, io),
        e => e.into(),
    })?;
    let parks = pipeline::facilities(&fac_path)?;
    let water: Vec<Polygon> = match &water_path {
        Some(p) => load_polygons(std::fs::File::open(p).map_err(|e| CliError::input(p, e))?)?,
        None => Vec::new(),
    };
    let (mut ok, mut skipped) = (Vec::new(), Vec::new());
    for (f, r) in parks
        .iter()
        .zip(all_park_stats(&raster, &parks, &water, rc.veg_threshold))
    {
        match r {
            Ok(s) => ok.push(s),
            Err(e @ Error::NoValidPixels { .. }) => skipped.push(json!({"facility": f.id, "reason": e.to_string()})),
            Err(e) => return Err(e.into()),
        }
    }
    if ok.is_empty() {
        return Err(Error::EmptyPool {
            what: "facility pixels".into(),
            words: 0,
        }
        .into());
    }
    let rows = ok
        .iter()
        .map(|s| {
            vec![
                s.facility_id.clone(),
                s.mean_ndvi.to_string(),
                s.percent_vegetated.to_string(),
                s.pixels_total.to_string(),
                s.pixels_water.to_string(),
                s.pixels_nodata.to_string(),
                s.pixels_valid.to_string(),
                s.pixels_vegetated.to_string(),
            ]
        })
        .collect();
    let out = Artifact::csv("veg_stats.csv", &VEG_HEADER, rows)?;
    let inputs = [Some(raster_path), Some(fac_path), water_path]
        .into_iter()
        .flatten()
        .collect();
    emit(&rc, "veg", inputs, &[out], json!([]), json!({"skipped": skipped}))
}

fn report(g: &GlobalArgs, stats: Option<PathBuf>, facilities: Option<PathBuf>) -> Result<Outcome, CliError> {
    let rc = RunConfig::resolve(
        g,
        Paths {
            stats,
            facilities,
            ..Paths::default()
        },
    )?;
    let stats_path = rc.input(|p| &p.stats, "stats")?;
    let fac_path = rc.input(|p| &p.facilities, "facilities")?;
    let mut rdr = csv::Reader::from_path(&stats_path).map_err(Error::from)?;
    let stats: Vec<ParkVegStats> = rdr.deserialize().collect::<Result<_, _>>().map_err(Error::from)?;
    if stats.is_empty() {
        return Err(Error::EmptyPool {
            what: "vegetation statistics".into(),
            words: 0,
        }
        .into());
    }
    let parks = pipeline::facilities(&fac_path)?;
    let rows = category_report(&stats, &parks)?;
    let mut bytes = Vec::new();
    write_report_csv(&rows, &mut bytes)?;
    let out = Artifact::new("report.csv", bytes);
    emit(
        &rc,
        "report",
        vec![stats_path, fac_path],
        &[out],
        json!([]),
        json!({"categories": rows.len()}),
    )
}

fn synth(
    g: &GlobalArgs,
    scenario_path: Option<PathBuf>,
    users: Option<usize>,
    null: bool,
) -> Result<Outcome, CliError> {
    let mut rc = RunConfig::resolve(g, Paths::default())?;
    let mut scenario = match &scenario_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
            serde_json::from_str::<Scenario>(&text)
                .map_err(|e| CliError::Usage(format!("scenario {}: {e}", p.display())))?
        }
        None => rc.scenario.clone().unwrap_or_default(),
    };
    if let Some(seed) = g.seed {
        scenario.seed = seed;
    }
    if let Some(u) = users {
        scenario.users = u;
    }
    if let Some(w) = g.window {
        scenario.window_hours = w;
    }
    if g.lens.is_some() || g.lens_closed {
        scenario.lens = rc.lens;
    }
    if null {
        scenario.effect_profile.clear();
    }
    rc.bootstrap.seed = scenario.seed;
    let out = generate(&scenario)?;
    let artifacts: Vec<Artifact> = out.files()?.into_iter().map(|(n, b)| Artifact::new(n, b)).collect();
    let streams =
        json!([{"label": "synth", "id": STREAM_SYNTH, "derived_seed": derive_seed(scenario.seed, STREAM_SYNTH)}]);
    let details = json!({
        "scenario": scenario,
        "baseline_sentiment": out.truth.baseline_sentiment,
        "planted_duration": out.truth.planted_duration,
        "messages": out.truth.messages,
    });
    emit(
        &rc,
        "synth",
        scenario_path.into_iter().collect(),
        &artifacts,
        streams,
        details,
    )
}
