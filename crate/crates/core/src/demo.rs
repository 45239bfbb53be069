//! Deterministic synthetic data set covering every input the dashboard reads.
//!
//! [`generate`] writes raw sources `D1`..`D7` and `WORLD` plus a manifest,
//! then runs [`refresh`] to produce the derived files. County case counts
//! follow two regimes that the map scenarios in [`scenarios`] pick up: a
//! surge after mid-March 2020 and a decline after late January 2021.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingestion::{
    refresh, write_articles, write_census, write_county_file, write_world_file, Article,
    CensusRecord, CountySeries, CumulativeSeries, DailyRecord, DailyTable, HttpFetcher,
    IngestError, RefreshReport, RegionId, SourceDescriptor, SourceKind,
};
use crate::mln::Band;
use crate::Period;

pub const DEFAULT_SEED: u64 = 20200318;
pub const DEFAULT_COUNTIES_PER_STATE: usize = 10;

/// First and last day of every generated series.
pub fn date_span() -> (NaiveDate, NaiveDate) {
    (day("2020-01-22"), day("2021-03-15"))
}

/// (postal code, FIPS prefix, centroid lat, centroid lon, median income scale)
const STATES: [(&str, &str, f64, f64, f64); 6] = [
    ("CA", "06", 37.2, -119.4, 1.25),
    ("FL", "12", 28.6, -82.4, 0.95),
    ("NY", "36", 42.9, -75.5, 1.15),
    ("TX", "48", 31.5, -99.3, 1.0),
    ("WA", "53", 47.4, -120.5, 1.2),
    ("WV", "54", 38.6, -80.6, 0.72),
];

const COUNTY_NAMES: [&str; 16] = [
    "Adams", "Baker", "Cedar", "Douglas", "Elm", "Franklin", "Grant", "Harbor", "Irwin",
    "Jackson", "Knox", "Lake", "Marion", "Newton", "Orange", "Pike",
];

/// A map request whose outcome the fixture is built to produce.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub feature: &'static str,
    pub period_a: Period,
    pub period_b: Period,
    /// Bands that more than 60% of counties should fall into.
    pub dominant: &'static [Band],
}

pub const SURGE_BANDS: &[Band] = &[Band::Spike, Band::HighRise];
pub const DECLINE_BANDS: &[Band] = &[Band::Dip, Band::LargeDip, Band::BigDip];

/// Spring break 2020 and the early-2021 vaccination drive.
pub fn scenarios() -> [Scenario; 2] {
    [
        Scenario {
            name: "spring-break",
            feature: "new_cases",
            period_a: "2020-02-18:2020-03-02".parse().expect("valid period"),
            period_b: "2020-03-20:2020-04-02".parse().expect("valid period"),
            dominant: SURGE_BANDS,
        },
        Scenario {
            name: "vaccination",
            feature: "new_cases",
            period_a: "2021-01-20:2021-01-22".parse().expect("valid period"),
            period_b: "2021-02-21:2021-02-23".parse().expect("valid period"),
            dominant: DECLINE_BANDS,
        },
    ]
}

/// Pre-drive comparison windows matching the vaccination scenario.
pub fn vaccination_pre_drive() -> (Period, Period) {
    (
        "2020-09-20:2020-09-22".parse().expect("valid period"),
        "2020-10-21:2020-10-23".parse().expect("valid period"),
    )
}

/// Where [`generate`] put everything.
#[derive(Debug, Clone)]
pub struct DemoLayout {
    pub root: PathBuf,
    pub sources_dir: PathBuf,
    pub manifest: PathBuf,
    pub raw_dir: PathBuf,
    pub data_dir: PathBuf,
    pub report: RefreshReport,
}

struct County {
    fips: String,
    state: &'static str,
    daily_cases: Vec<u64>,
    daily_deaths: Vec<u64>,
    /// Day index whose reported cumulative value is revised downwards.
    glitch: Option<(usize, u64)>,
}

fn day(s: &str) -> NaiveDate {
    s.parse().expect("valid date literal")
}

fn days() -> Vec<NaiveDate> {
    let (start, end) = date_span();
    start.iter_days().take_while(|d| *d <= end).collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t.clamp(0.0, 1.0)
}

fn frac(d: NaiveDate, from: &str, to: &str) -> f64 {
    let (a, b) = (day(from), day(to));
    (d - a).num_days() as f64 / (b - a).num_days() as f64
}

/// Multiplier on a county's baseline on day `d`.
fn level(d: NaiveDate, surge: f64, peak: f64, settle: f64) -> f64 {
    if d <= day("2020-03-05") {
        1.0
    } else if d <= day("2020-03-15") {
        lerp(1.0, surge, frac(d, "2020-03-05", "2020-03-15"))
    } else if d <= day("2020-06-30") {
        surge
    } else if d <= day("2021-01-25") {
        lerp(surge, peak, frac(d, "2020-06-30", "2021-01-25"))
    } else if d <= day("2021-02-10") {
        lerp(peak, peak * settle, frac(d, "2021-01-25", "2021-02-10"))
    } else {
        peak * settle
    }
}

fn make_counties(rng: &mut ChaCha8Rng, per_state: usize, dates: &[NaiveDate]) -> Vec<County> {
    let mut out = Vec::new();
    for (state, prefix, ..) in STATES {
        for i in 0..per_state {
            let fips = format!("{prefix}{:03}", 2 * i + 1);
            let base = rng.gen_range(4.0..30.0);
            let surge = match rng.gen_range(0..100) {
                0..=79 => rng.gen_range(2.6..6.0),
                80..=89 => rng.gen_range(1.6..1.95),
                _ => rng.gen_range(0.75..1.3),
            };
            let peak = surge * rng.gen_range(2.0..4.0);
            let settle = match rng.gen_range(0..100) {
                0..=74 => rng.gen_range(0.15..0.6),
                75..=84 => rng.gen_range(0.65..0.9),
                _ => rng.gen_range(1.08..1.4),
            };
            let cfr = rng.gen_range(0.008..0.025);
            let mut daily_cases = Vec::with_capacity(dates.len());
            let mut daily_deaths = Vec::with_capacity(dates.len());
            for &d in dates {
                let expected = base * level(d, surge, peak, settle) * rng.gen_range(0.9..1.1);
                let cases = expected.round() as u64;
                daily_cases.push(cases);
                daily_deaths.push((cases as f64 * cfr + rng.gen_range(0.0..1.0)).floor() as u64);
            }
            let glitch = (i % 4 == 1).then(|| {
                let idx = dates
                    .iter()
                    .position(|d| *d == day("2020-05-01"))
                    .expect("date in span")
                    + rng.gen_range(0..120);
                (idx, rng.gen_range(5..60))
            });
            out.push(County {
                fips,
                state,
                daily_cases,
                daily_deaths,
                glitch,
            });
        }
    }
    out
}

fn cumulative(daily: &[u64]) -> Vec<u64> {
    daily
        .iter()
        .scan(0u64, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Reported cumulative counts, including the downward revision glitch.
fn reported(c: &County) -> (Vec<u64>, Vec<u64>) {
    let mut cases = cumulative(&c.daily_cases);
    let deaths = cumulative(&c.daily_deaths);
    if let Some((idx, drop)) = c.glitch {
        cases[idx] = cases[idx].saturating_sub(drop);
    }
    (cases, deaths)
}

fn series(id: &str, dates: &[NaiveDate], values: &[u64]) -> Result<CumulativeSeries, IngestError> {
    CumulativeSeries::new(id, dates.iter().copied().zip(values.iter().copied()).collect())
}

fn census(rng: &mut ChaCha8Rng, counties: &[County]) -> BTreeMap<String, CensusRecord> {
    counties
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (_, _, lat, lon, income) = STATES
                .iter()
                .find(|s| s.0 == c.state)
                .copied()
                .expect("known state");
            let rec = CensusRecord {
                fips: c.fips.clone(),
                county_name: format!("{} County", COUNTY_NAMES[i % COUNTY_NAMES.len()]),
                state: c.state.to_string(),
                lat: ((lat + rng.gen_range(-1.5..1.5)) * 100.0).round() / 100.0,
                lon: ((lon + rng.gen_range(-2.0..2.0)) * 100.0).round() / 100.0,
                population_density: (rng.gen_range(2.0f64..8.0).exp() * 10.0).round() / 10.0,
                median_household_income: (income * rng.gen_range(42_000.0f64..70_000.0)).round(),
                pct_high_school: (rng.gen_range(74.0f64..95.0) * 10.0).round() / 10.0,
            };
            (c.fips.clone(), rec)
        })
        .collect()
}

fn state_tables(
    rng: &mut ChaCha8Rng,
    counties: &[County],
    dates: &[NaiveDate],
) -> Result<[DailyTable; 4], IngestError> {
    let vax_start = day("2020-12-14");
    let (mut d1, mut d2, mut d3, mut d4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (state, ..) in STATES {
        let region = RegionId::parse(state)?;
        let members: Vec<&County> = counties.iter().filter(|c| c.state == state).collect();
        let reports: Vec<(Vec<u64>, Vec<u64>)> = members.iter().map(|c| reported(c)).collect();
        let trips_base = rng.gen_range(2_000.0..9_000.0);
        let tests_ratio = if state == "WV" { 4.0 } else { rng.gen_range(8.0..14.0) };
        for (t, &d) in dates.iter().enumerate() {
            let cases: u64 = reports.iter().map(|r| r.0[t]).sum();
            let deaths: u64 = reports.iter().map(|r| r.1[t]).sum();
            let new_cases: u64 = members.iter().map(|c| c.daily_cases[t]).sum();
            let tests = (new_cases as f64 * tests_ratio * rng.gen_range(0.8..1.2)).round();
            d1.push(
                DailyRecord::new(region.clone(), d)
                    .with("cases", cases as f64)
                    .with("deaths", deaths as f64)
                    .with("new_tests", tests),
            );
            if d >= vax_start {
                let ramp = ((d - vax_start).num_days() as f64 / 60.0).min(1.0);
                let doses = (trips_base * 4.0 * ramp * rng.gen_range(0.9..1.1)).round();
                d2.push(DailyRecord::new(region.clone(), d).with("vaccinations", doses));
            }
            let restriction = if d < day("2020-03-15") {
                1.0
            } else if d < day("2020-06-01") {
                0.55
            } else if d < vax_start {
                0.8
            } else {
                lerp(0.8, 1.05, (d - vax_start).num_days() as f64 / 90.0)
            };
            let trips = (trips_base * restriction * rng.gen_range(0.93..1.07)).round();
            d3.push(DailyRecord::new(region.clone(), d).with("trips", trips));
            let mobility = (100.0 * restriction * rng.gen_range(0.95..1.05) * 10.0).round() / 10.0;
            d4.push(DailyRecord::new(region.clone(), d).with("mobility", mobility));
        }
    }
    Ok([
        DailyTable::from_records("state", d1)?,
        DailyTable::from_records("state", d2)?,
        DailyTable::from_records("state", d3)?,
        DailyTable::from_records("state", d4)?,
    ])
}

const TOPICS: [(&str, &str); 6] = [
    ("Covid cases climb in {s}", "Health officials in {s} report a rise in coronavirus infections."),
    ("Pandemic reshapes travel in {s}", "Road trips in {s} shift as the pandemic continues."),
    ("Vaccine clinics open across {s}", "Vaccination sites in {s} expand appointment slots."),
    ("Hospitals in {s} brace for Covid surge", "Coronavirus admissions strain hospital capacity."),
    ("{s} schools weigh reopening", "Districts discuss pandemic safety measures for classrooms."),
    ("Testing lines grow in {s}", "Demand for covid tests outpaces supply at {s} sites."),
];

const OFF_TOPIC: [(&str, &str); 3] = [
    ("{s} wildfire season outlook", "Forecasters expect a dry summer."),
    ("Election turnout in {s}", "Officials prepare polling places."),
    ("High school sports return in {s}", "Fans cheer the new season."),
];

fn articles(rng: &mut ChaCha8Rng) -> Vec<Article> {
    let mut out = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, date: NaiveDate, on_topic: bool| {
        let state = STATES[rng.gen_range(0..STATES.len())].0;
        let (title, summary) = if on_topic {
            TOPICS[rng.gen_range(0..TOPICS.len())]
        } else {
            OFF_TOPIC[rng.gen_range(0..OFF_TOPIC.len())]
        };
        let id = format!("a{:04}", out.len() + 1);
        let time = date.and_hms_opt(rng.gen_range(6..22), rng.gen_range(0..60), 0).expect("valid time");
        out.push(Article {
            url: format!("https://news.example.org/{id}"),
            id,
            published: Utc.from_utc_datetime(&time),
            title: title.replace("{s}", state),
            summary: summary.replace("{s}", state),
        });
    };
    // Dense coverage right after spring break.
    let post_break = day("2020-03-20");
    for i in 0..18 {
        push(rng, post_break + Duration::days(i % 14), true);
    }
    for i in 0..2 {
        push(rng, post_break + Duration::days(3 + i), false);
    }
    // Exactly three on-topic stories in the first pre-drive window.
    for i in 0..3 {
        push(rng, day("2020-09-20") + Duration::days(i), true);
    }
    push(rng, day("2020-09-21"), false);
    // Sparse background coverage, skipping the windows above.
    let (start, end) = date_span();
    let mut d = start;
    while d <= end {
        let busy = (d >= day("2020-03-20") && d <= day("2020-04-02"))
            || (d >= day("2020-09-20") && d <= day("2020-09-22"));
        if !busy {
            let on_topic = rng.gen_bool(0.8);
            push(rng, d, on_topic);
        }
        d += Duration::days(rng.gen_range(6..12));
    }
    let mut ids: Vec<usize> = (0..out.len()).collect();
    ids.shuffle(rng);
    ids.into_iter().map(|i| out[i].clone()).collect()
}

/// Writes the fixture under `out` and runs a refresh over it.
///
/// Layout: `sources/` holds the raw source files, `sources.json` the
/// manifest, `raw/` the fetched copies and `data/` the derived files.
pub fn generate(out: &Path, seed: u64, counties_per_state: usize) -> Result<DemoLayout, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = days();
    let counties = make_counties(&mut rng, counties_per_state.max(1), &dates);
    let sources_dir = out.join("sources");
    std::fs::create_dir_all(&sources_dir).map_err(|e| IngestError::io(&sources_dir, e))?;

    let [d1, d2, d3, d4] = state_tables(&mut rng, &counties, &dates)?;
    for (name, table) in [("D1", &d1), ("D2", &d2), ("D3", &d3), ("D4", &d4)] {
        table.write_csv(&sources_dir.join(format!("{name}.csv")))?;
    }
    write_articles(&sources_dir.join("D5.csv"), &articles(&mut rng))?;

    let mut county_files = BTreeMap::new();
    let (mut world_cases, mut world_deaths) = (vec![0u64; dates.len()], vec![0u64; dates.len()]);
    for c in &counties {
        let (cases, deaths) = reported(c);
        for t in 0..dates.len() {
            world_cases[t] += cases[t] * 5;
            world_deaths[t] += deaths[t] * 5;
        }
        county_files.insert(
            c.fips.clone(),
            CountySeries {
                cases: series(&c.fips, &dates, &cases)?,
                deaths: series(&c.fips, &dates, &deaths)?,
            },
        );
    }
    write_county_file(&sources_dir.join("D6.csv"), &county_files)?;
    write_census(&sources_dir.join("D7.csv"), &census(&mut rng, &counties))?;
    write_world_file(
        &sources_dir.join("WORLD.csv"),
        &CountySeries {
            cases: series("WORLD", &dates, &world_cases)?,
            deaths: series("WORLD", &dates, &world_deaths)?,
        },
    )?;

    let descriptors: Vec<SourceDescriptor> = ["D1", "D2", "D3", "D4", "D5", "D6", "D7", "WORLD"]
        .into_iter()
        .map(|name| SourceDescriptor {
            name: name.to_string(),
            kind: SourceKind::LocalFile,
            location: format!("sources/{name}.csv"),
            schedule_hint: if name == "D7" { 365 * 86_400 } else { 86_400 },
        })
        .collect();
    let manifest = out.join("sources.json");
    let json = serde_json::to_vec_pretty(&descriptors).expect("descriptors serialize");
    std::fs::write(&manifest, json).map_err(|e| IngestError::io(&manifest, e))?;

    let resolved = crate::ingestion::load_manifest(&manifest)?;
    let raw_dir = out.join("raw");
    let data_dir = out.join("data");
    let report = refresh(&resolved, &raw_dir, &data_dir, &HttpFetcher::default())?;
    Ok(DemoLayout {
        root: out.to_path_buf(),
        sources_dir,
        manifest,
        raw_dir,
        data_dir,
        report,
    })
}
