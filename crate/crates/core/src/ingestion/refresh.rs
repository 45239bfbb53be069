//! The refresh pipeline: fetch raw sources, clean them, and write the derived
//! files that the rest of the system reads.
//!
//! Raw sources are recognised by descriptor name:
//!
//! | name    | content                                         | derived file   |
//! |---------|-------------------------------------------------|----------------|
//! | `D1`    | `state,date,cases,deaths,new_tests` (cumulative)| `states.csv`   |
//! | `D2`    | `state,date,vaccinations`                       | `states.csv`   |
//! | `D3`    | `state,date,trips`                              | `states.csv`   |
//! | `D4`    | `state,date,mobility`                           | `states.csv`   |
//! | `D5`    | `id,published,title,abstract,url`               | `articles.csv` |
//! | `D6`    | `fips,date,cases,deaths` (cumulative)           | `counties.csv` |
//! | `D7`    | census attributes                               | `census.csv`   |
//! | `WORLD` | `date,cases,deaths` (cumulative)                | `world.csv`    |

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::articles::{read_articles, write_articles};
use super::census::{read_census, write_census};
use super::clean::{clean_cumulative, daily_new_from_cumulative};
use super::fetch::{fetch_sources, FetchedSource, Fetcher, SourceDescriptor};
use super::series::{
    read_county_file, read_world_file, write_county_file, write_world_file, CountySeries,
    CumulativeSeries,
};
use super::table::{consolidate, DailyRecord, DailyTable, RegionId};
use super::{IngestError, Result};

pub const COUNTIES_FILE: &str = "counties.csv";
pub const STATES_FILE: &str = "states.csv";
pub const WORLD_FILE: &str = "world.csv";
pub const CENSUS_FILE: &str = "census.csv";
pub const ARTICLES_FILE: &str = "articles.csv";

/// Every file written by [`refresh`], with the sources it depends on.
pub const DERIVED_FILES: [(&str, &[&str]); 5] = [
    (STATES_FILE, &["D1", "D2", "D3", "D4"]),
    (ARTICLES_FILE, &["D5"]),
    (COUNTIES_FILE, &["D6"]),
    (CENSUS_FILE, &["D7"]),
    (WORLD_FILE, &["WORLD"]),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedStatus {
    Updated,
    Unchanged,
    /// None of its sources were available.
    Missing,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerivedFile {
    pub name: String,
    pub path: PathBuf,
    pub status: DerivedStatus,
    /// SHA-256 of the file after the refresh, if it exists.
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefreshReport {
    pub sources: Vec<FetchedSource>,
    pub derived: Vec<DerivedFile>,
}

impl RefreshReport {
    pub fn changed(&self) -> bool {
        self.derived
            .iter()
            .any(|d| d.status == DerivedStatus::Updated)
    }
}

pub(crate) fn file_digest(path: &Path) -> Option<String> {
    std::fs::read(path)
        .ok()
        .map(|bytes| hex::encode(Sha256::digest(bytes)))
}

/// Fetches `sources` into `raw_dir` and rebuilds the derived files in
/// `out_dir`. Files whose content would not change are left untouched.
pub fn refresh(
    sources: &[SourceDescriptor],
    raw_dir: &Path,
    out_dir: &Path,
    fetcher: &dyn Fetcher,
) -> Result<RefreshReport> {
    let fetched = fetch_sources(sources, raw_dir, fetcher)?;
    std::fs::create_dir_all(out_dir).map_err(|e| IngestError::Destination {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let available: HashMap<&str, &Path> = fetched
        .iter()
        .filter(|f| f.present)
        .map(|f| (f.name.as_str(), f.path.as_path()))
        .collect();

    let mut derived = Vec::with_capacity(DERIVED_FILES.len());
    for (name, deps) in DERIVED_FILES {
        let path = out_dir.join(name);
        let inputs: Vec<(&str, &Path)> = deps
            .iter()
            .filter_map(|d| available.get(d).map(|p| (*d, *p)))
            .collect();
        let status = if inputs.is_empty() {
            DerivedStatus::Missing
        } else {
            match build_derived(name, &inputs, &path) {
                Ok(true) => DerivedStatus::Updated,
                Ok(false) => DerivedStatus::Unchanged,
                Err(e) => {
                    warn!("could not rebuild {name}: {e}");
                    DerivedStatus::Failed(e.to_string())
                }
            }
        };
        derived.push(DerivedFile {
            name: name.to_string(),
            digest: file_digest(&path),
            path,
            status,
        });
    }
    info!(
        "refresh: {} sources, {} derived files updated",
        fetched.len(),
        derived
            .iter()
            .filter(|d| d.status == DerivedStatus::Updated)
            .count()
    );
    Ok(RefreshReport {
        sources: fetched,
        derived,
    })
}

fn build_derived(name: &str, inputs: &[(&str, &Path)], out: &Path) -> Result<bool> {
    match name {
        STATES_FILE => {
            let mut tables = Vec::with_capacity(inputs.len());
            for (source, path) in inputs {
                let table = DailyTable::read_csv(path)?;
                tables.push(if *source == "D1" {
                    derive_state_counts(&table, path)?
                } else {
                    table
                });
            }
            consolidate(&tables)?.write_csv(out)
        }
        COUNTIES_FILE => {
            let counties = read_county_file(inputs[0].1)?;
            let cleaned: BTreeMap<String, CountySeries> = counties
                .into_iter()
                .map(|(fips, s)| {
                    let s = CountySeries {
                        cases: clean_cumulative(&s.cases),
                        deaths: clean_cumulative(&s.deaths),
                    };
                    (fips, s)
                })
                .collect();
            write_county_file(out, &cleaned)
        }
        WORLD_FILE => {
            let world = read_world_file(inputs[0].1)?;
            write_world_file(
                out,
                &CountySeries {
                    cases: clean_cumulative(&world.cases),
                    deaths: clean_cumulative(&world.deaths),
                },
            )
        }
        CENSUS_FILE => write_census(out, &read_census(inputs[0].1)?),
        ARTICLES_FILE => {
            let mut articles = read_articles(inputs[0].1)?;
            articles.sort_by(|a, b| a.published.cmp(&b.published).then_with(|| a.id.cmp(&b.id)));
            write_articles(out, &articles)
        }
        _ => unreachable!("unknown derived file {name}"),
    }
}

/// Cleans the cumulative `cases`/`deaths` columns of the state daily source
/// and adds the derived `new_cases`/`new_deaths` columns.
fn derive_state_counts(table: &DailyTable, path: &Path) -> Result<DailyTable> {
    let mut records: BTreeMap<(RegionId, chrono::NaiveDate), DailyRecord> = BTreeMap::new();
    let mut cumulative: BTreeMap<(RegionId, &str), Vec<(chrono::NaiveDate, i64)>> = BTreeMap::new();
    for (region, date, values) in table.rows() {
        let mut rec = DailyRecord::new(region.clone(), date);
        for (feature, value) in table.features().iter().zip(values) {
            let Some(value) = *value else { continue };
            match feature.as_str() {
                "cases" | "deaths" => {
                    if value.fract() != 0.0 {
                        return Err(IngestError::format(
                            path,
                            format!("{region} {date}: cumulative {feature} must be an integer"),
                        ));
                    }
                    let key = if feature == "cases" { "cases" } else { "deaths" };
                    cumulative
                        .entry((region.clone(), key))
                        .or_default()
                        .push((date, value as i64));
                }
                _ => {
                    rec.features.insert(feature.clone(), value);
                }
            }
        }
        records.insert((region.clone(), date), rec);
    }
    for ((region, feature), points) in cumulative {
        let cleaned = clean_cumulative(&CumulativeSeries::from_raw(region.to_string(), points)?);
        let daily = daily_new_from_cumulative(&cleaned)?;
        for (&(date, total), &(_, new)) in cleaned.points().iter().zip(&daily) {
            let rec = records
                .get_mut(&(region.clone(), date))
                .expect("row exists for every cumulative point");
            rec.features.insert(feature.to_string(), total as f64);
            rec.features.insert(format!("new_{feature}"), new as f64);
        }
    }
    DailyTable::from_records(table.key_column(), records.into_values())
}
