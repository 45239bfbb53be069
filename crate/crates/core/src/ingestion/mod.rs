//! Acquisition, cleaning and consolidation of the tabular inputs.
//!
//! All files are UTF-8 CSV with a header row and ISO-8601 dates. Reading
//! functions are pure; [`fetch_sources`] and [`refresh`] write to disk and
//! must be serialized per destination directory by the caller.

mod articles;
mod census;
mod clean;
mod fetch;
mod refresh;
mod series;
mod table;
mod ticker;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub use articles::{filter_articles, read_articles, write_articles, Article, DEFAULT_KEYWORDS};
pub use census::{read_census, write_census, CensusRecord};
pub use clean::{clean_cumulative, daily_new_from_cumulative};
pub use fetch::{
    fetch_sources, load_manifest, Fetcher, FetchedSource, HttpFetcher, SourceDescriptor, SourceKind,
};
pub use refresh::{
    refresh, DerivedFile, DerivedStatus, RefreshReport, ARTICLES_FILE, CENSUS_FILE, COUNTIES_FILE,
    DERIVED_FILES, STATES_FILE, WORLD_FILE,
};
pub use series::{
    read_county_file, read_world_file, write_county_file, write_world_file, CountySeries,
    CumulativeSeries,
};
pub use table::{consolidate, DailyRecord, DailyTable, RegionId};
pub use ticker::{latest_ticker, TickerRow, US, WORLD};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid region id {0:?}, expected a 2-letter state code or a 5-digit county FIPS")]
    InvalidRegion(String),
    #[error("invalid value {value} for feature {feature:?} of {region} on {date}")]
    InvalidValue {
        region: String,
        date: NaiveDate,
        feature: String,
        value: f64,
    },
    #[error("duplicate row for {region} on {date}")]
    DuplicateRow { region: String, date: NaiveDate },
    #[error("series {region} has duplicate date {date}")]
    DuplicateDate { region: String, date: NaiveDate },
    #[error("series {region} has negative count {count} on {date}")]
    NegativeCount {
        region: String,
        date: NaiveDate,
        count: i64,
    },
    #[error("series {region} decreases on {date}; clean it before deriving daily counts")]
    NotMonotonic { region: String, date: NaiveDate },
    #[error("conflicting values for {region} on {date}, feature {feature:?}: {first} vs {second}")]
    Conflict {
        region: String,
        date: NaiveDate,
        feature: String,
        first: f64,
        second: f64,
    },
    #[error("tables disagree on the region column: {0:?} vs {1:?}")]
    KeyColumn(String, String),
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("no series available to compute the {0} aggregate")]
    NoAggregate(&'static str),
    #[error("keyword list is empty")]
    NoKeywords,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid census record for {fips}: {reason}")]
    InvalidCensus { fips: String, reason: String },
    #[error("duplicate {what} {id:?}")]
    DuplicateId { what: &'static str, id: String },
    #[error("invalid source descriptor {name:?}: {reason}")]
    InvalidSource { name: String, reason: String },
    #[error("destination {path} is not writable: {source}")]
    Destination {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        IngestError::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IngestError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Writes `bytes` to `path` through a temporary sibling and a rename, so
/// readers never observe a partially written file. Returns `false` without
/// touching the file when it already holds exactly `bytes`.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<bool> {
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    Ok(true)
}
