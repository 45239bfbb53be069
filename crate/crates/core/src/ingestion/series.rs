use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::table::{parse_date, RegionId};
use super::{IngestError, Result};

/// Cumulative counts for one region with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulativeSeries {
    region_id: String,
    points: Vec<(NaiveDate, u64)>,
}

impl CumulativeSeries {
    /// Builds a series from points that are already in strictly increasing
    /// date order.
    pub fn new(region_id: impl Into<String>, points: Vec<(NaiveDate, u64)>) -> Result<Self> {
        let region_id = region_id.into();
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(IngestError::DuplicateDate {
                    region: region_id,
                    date: w[1].0,
                });
            }
        }
        Ok(Self { region_id, points })
    }

    /// Builds a series from raw scraped points in any order. Duplicate dates
    /// and negative counts are rejected.
    pub fn from_raw(region_id: impl Into<String>, mut points: Vec<(NaiveDate, i64)>) -> Result<Self> {
        let region_id = region_id.into();
        points.sort_by_key(|p| p.0);
        let mut out = Vec::with_capacity(points.len());
        for (i, &(date, count)) in points.iter().enumerate() {
            if i > 0 && points[i - 1].0 == date {
                return Err(IngestError::DuplicateDate {
                    region: region_id,
                    date,
                });
            }
            if count < 0 {
                return Err(IngestError::NegativeCount {
                    region: region_id,
                    date,
                    count,
                });
            }
            out.push((date, count as u64));
        }
        Ok(Self {
            region_id,
            points: out,
        })
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    pub fn points(&self) -> &[(NaiveDate, u64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<(NaiveDate, u64)> {
        self.points.last().copied()
    }

    /// Count on `date`, or the latest count before it.
    pub fn as_of(&self, date: NaiveDate) -> Option<u64> {
        match self.points.binary_search_by_key(&date, |p| p.0) {
            Ok(i) => Some(self.points[i].1),
            Err(0) => None,
            Err(i) => Some(self.points[i - 1].1),
        }
    }

    pub fn is_monotonic(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub(crate) fn with_points(&self, points: Vec<(NaiveDate, u64)>) -> Self {
        Self {
            region_id: self.region_id.clone(),
            points,
        }
    }
}

/// Cumulative case and death series for one county.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountySeries {
    pub cases: CumulativeSeries,
    pub deaths: CumulativeSeries,
}

#[derive(Deserialize)]
struct CountyRow {
    fips: String,
    date: String,
    cases: i64,
    deaths: i64,
}

/// Reads a county file with columns `fips,date,cases,deaths` (cumulative).
pub fn read_county_file(path: &Path) -> Result<BTreeMap<String, CountySeries>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IngestError::csv(path, e))?;
    let mut raw: BTreeMap<String, (Vec<(NaiveDate, i64)>, Vec<(NaiveDate, i64)>)> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<CountyRow>().enumerate() {
        let row = row.map_err(|e| IngestError::csv(path, e))?;
        let fips = row.fips.trim();
        if !RegionId::is_fips(fips) {
            return Err(IngestError::InvalidRegion(fips.to_string()));
        }
        let date = parse_date(&row.date, path, line)?;
        let entry = raw.entry(fips.to_string()).or_default();
        entry.0.push((date, row.cases));
        entry.1.push((date, row.deaths));
    }
    raw.into_iter()
        .map(|(fips, (cases, deaths))| {
            let series = CountySeries {
                cases: CumulativeSeries::from_raw(fips.clone(), cases)?,
                deaths: CumulativeSeries::from_raw(fips.clone(), deaths)?,
            };
            Ok((fips, series))
        })
        .collect()
}

pub fn write_county_file(path: &Path, counties: &BTreeMap<String, CountySeries>) -> Result<bool> {
    let mut out = Vec::new();
    out.extend_from_slice(b"fips,date,cases,deaths\n");
    for (fips, s) in counties {
        for (c, d) in s.cases.points().iter().zip(s.deaths.points()) {
            writeln!(out, "{fips},{},{},{}", c.0.format("%Y-%m-%d"), c.1, d.1).unwrap();
        }
    }
    super::write_atomic(path, &out).map_err(|e| IngestError::io(path, e))
}

#[derive(Deserialize)]
struct WorldRow {
    date: String,
    cases: i64,
    deaths: i64,
}

/// Reads the world totals file with columns `date,cases,deaths`.
pub fn read_world_file(path: &Path) -> Result<CountySeries> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IngestError::csv(path, e))?;
    let mut cases = Vec::new();
    let mut deaths = Vec::new();
    for (line, row) in rdr.deserialize::<WorldRow>().enumerate() {
        let row = row.map_err(|e| IngestError::csv(path, e))?;
        let date = parse_date(&row.date, path, line)?;
        cases.push((date, row.cases));
        deaths.push((date, row.deaths));
    }
    Ok(CountySeries {
        cases: CumulativeSeries::from_raw(super::WORLD, cases)?,
        deaths: CumulativeSeries::from_raw(super::WORLD, deaths)?,
    })
}

pub fn write_world_file(path: &Path, world: &CountySeries) -> Result<bool> {
    let mut out = Vec::new();
    out.extend_from_slice(b"date,cases,deaths\n");
    for (c, d) in world.cases.points().iter().zip(world.deaths.points()) {
        writeln!(out, "{},{},{}", c.0.format("%Y-%m-%d"), c.1, d.1).unwrap();
    }
    super::write_atomic(path, &out).map_err(|e| IngestError::io(path, e))
}
