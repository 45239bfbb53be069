//! Immutable view of the derived data files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlndash_core::ingestion::{
    read_articles, read_census, read_county_file, read_world_file, Article, CensusRecord,
    CountySeries, CumulativeSeries, DailyTable, IngestError, ARTICLES_FILE, CENSUS_FILE,
    COUNTIES_FILE, STATES_FILE, WORLD, WORLD_FILE,
};
use sha2::{Digest, Sha256};
use tracing::warn;

/// Everything the read endpoints need, loaded once per refresh and shared
/// behind an `Arc`.
#[derive(Debug)]
pub struct DataSnapshot {
    pub data_dir: PathBuf,
    pub counties: BTreeMap<String, CountySeries>,
    pub census: BTreeMap<String, CensusRecord>,
    pub states: DailyTable,
    pub articles: Vec<Article>,
    pub ticker_cases: BTreeMap<String, CumulativeSeries>,
    pub ticker_deaths: BTreeMap<String, CumulativeSeries>,
    /// SHA-256 over the loaded files; changes whenever the data does.
    pub digest: String,
}

fn optional<T>(path: &Path, read: impl FnOnce(&Path) -> Result<T, IngestError>) -> Result<Option<T>, IngestError> {
    if path.is_file() {
        read(path).map(Some)
    } else {
        warn!("{} is missing; serving without it", path.display());
        Ok(None)
    }
}

impl DataSnapshot {
    /// Reads the derived files in `data_dir`. Missing files yield empty
    /// data; malformed files are an error.
    pub fn load(data_dir: &Path) -> Result<Self, IngestError> {
        let mut hasher = Sha256::new();
        for name in [ARTICLES_FILE, CENSUS_FILE, COUNTIES_FILE, STATES_FILE, WORLD_FILE] {
            hasher.update(name.as_bytes());
            if let Ok(bytes) = std::fs::read(data_dir.join(name)) {
                hasher.update((bytes.len() as u64).to_le_bytes());
                hasher.update(&bytes);
            }
        }
        let counties = optional(&data_dir.join(COUNTIES_FILE), read_county_file)?.unwrap_or_default();
        let census = optional(&data_dir.join(CENSUS_FILE), read_census)?.unwrap_or_default();
        let states = optional(&data_dir.join(STATES_FILE), DailyTable::read_csv)?
            .unwrap_or_else(|| DailyTable::empty("state"));
        let articles = optional(&data_dir.join(ARTICLES_FILE), read_articles)?.unwrap_or_default();
        let world = optional(&data_dir.join(WORLD_FILE), read_world_file)?;

        let (mut ticker_cases, mut ticker_deaths) = state_series(&states)?;
        if let Some(w) = world {
            ticker_cases.insert(WORLD.to_string(), w.cases);
            ticker_deaths.insert(WORLD.to_string(), w.deaths);
        }
        Ok(Self {
            data_dir: data_dir.to_path_buf(),
            counties,
            census,
            states,
            articles,
            ticker_cases,
            ticker_deaths,
            digest: hex::encode(hasher.finalize()),
        })
    }
}

type SeriesMap = BTreeMap<String, CumulativeSeries>;

fn state_series(states: &DailyTable) -> Result<(SeriesMap, SeriesMap), IngestError> {
    let mut points: BTreeMap<(String, bool), Vec<(chrono::NaiveDate, i64)>> = BTreeMap::new();
    let cols = states.features();
    let col = |name: &str| cols.iter().position(|f| f == name);
    let (Some(ci), Some(di)) = (col("cases"), col("deaths")) else {
        return Ok(Default::default());
    };
    for (region, date, values) in states.rows() {
        for (idx, is_cases) in [(ci, true), (di, false)] {
            if let Some(v) = values[idx] {
                points
                    .entry((region.to_string(), is_cases))
                    .or_default()
                    .push((date, v as i64));
            }
        }
    }
    let (mut cases, mut deaths) = (SeriesMap::new(), SeriesMap::new());
    for ((region, is_cases), pts) in points {
        let series = CumulativeSeries::from_raw(region.clone(), pts)?;
        if is_cases {
            cases.insert(region, series);
        } else {
            deaths.insert(region, series);
        }
    }
    Ok((cases, deaths))
}
