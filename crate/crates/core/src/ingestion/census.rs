use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::RegionId;
use super::{IngestError, Result};

/// Census attributes used to enrich community allocations for drill-down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub fips: String,
    #[serde(rename = "county")]
    pub county_name: String,
    pub state: String,
    pub lat: f64,
    pub lon: f64,
    /// Persons per square mile.
    pub population_density: f64,
    /// USD.
    pub median_household_income: f64,
    /// Percentage of adults with a high-school diploma, 0 to 100.
    pub pct_high_school: f64,
}

impl CensusRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| IngestError::InvalidCensus {
            fips: self.fips.clone(),
            reason: reason.to_string(),
        };
        if !RegionId::is_fips(&self.fips) {
            return Err(bad("fips must be 5 digits"));
        }
        if !(0.0..=100.0).contains(&self.pct_high_school) {
            return Err(bad("pct_high_school must lie in [0, 100]"));
        }
        if !(self.population_density > 0.0 && self.population_density.is_finite()) {
            return Err(bad("population_density must be positive"));
        }
        if !self.median_household_income.is_finite() || !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(bad("non-finite numeric field"));
        }
        Ok(())
    }
}

/// Reads `fips,county,state,lat,lon,population_density,median_household_income,pct_high_school`.
pub fn read_census(path: &Path) -> Result<BTreeMap<String, CensusRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IngestError::csv(path, e))?;
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<CensusRecord>() {
        let rec = rec.map_err(|e| IngestError::csv(path, e))?;
        rec.validate()?;
        if out.contains_key(&rec.fips) {
            return Err(IngestError::DuplicateId {
                what: "census fips",
                id: rec.fips,
            });
        }
        out.insert(rec.fips.clone(), rec);
    }
    Ok(out)
}

pub fn write_census(path: &Path, census: &BTreeMap<String, CensusRecord>) -> Result<bool> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in census.values() {
        w.serialize(rec).map_err(|e| IngestError::csv(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| IngestError::io(path, e.into_error()))?;
    super::write_atomic(path, &bytes).map_err(|e| IngestError::io(path, e))
}
