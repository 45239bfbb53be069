use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::band::{assign_band, Band};
use super::layer::MlnLayer;
use super::louvain::Partition;
use super::{MlnError, Result};
use crate::ingestion::CensusRecord;

/// Labels each community with the band of its members. Mixed communities
/// take the majority band; ties go to the more severe band.
pub fn categorize(layer: &MlnLayer, part: &Partition) -> BTreeMap<usize, Band> {
    let mut counts: BTreeMap<usize, BTreeMap<Band, usize>> = BTreeMap::new();
    for (i, node) in layer.nodes().iter().enumerate() {
        if let Some(band) = layer.band_of(node) {
            *counts
                .entry(part.community(i))
                .or_default()
                .entry(band)
                .or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, tally)| {
            let band = tally
                .into_iter()
                .max_by_key(|(band, n)| (*n, band.severity()))
                .map(|(band, _)| band)
                .expect("community has at least one banded member");
            (c, band)
        })
        .collect()
}

/// One county's community assignment enriched with census attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRow {
    pub fips: String,
    pub community_id: usize,
    pub band: Band,
    pub percent_change: f64,
    pub census: CensusRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommunityAllocation {
    pub rows: Vec<AllocationRow>,
}

/// Header of the community allocation CSV.
pub const ALLOCATION_HEADER: &str = "fips,community_id,band,percent_change,county,state,lat,lon,population_density,median_household_income,pct_high_school";

/// Joins the partition, bands and percentage changes of a layer with census
/// records. Rows are sorted by FIPS.
pub fn make_allocation(
    layer: &MlnLayer,
    part: &Partition,
    changes: &BTreeMap<String, f64>,
    census: &BTreeMap<String, CensusRecord>,
) -> Result<CommunityAllocation> {
    let missing: Vec<&str> = layer
        .nodes()
        .iter()
        .filter(|f| !census.contains_key(*f))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(MlnError::MissingCensus(missing.join(", ")));
    }
    let mut rows = Vec::with_capacity(layer.node_count());
    for (i, fips) in layer.nodes().iter().enumerate() {
        let percent_change = *changes
            .get(fips)
            .ok_or_else(|| MlnError::UnknownNode(fips.clone()))?;
        let census = census[fips].clone();
        census.validate()?;
        rows.push(AllocationRow {
            fips: fips.clone(),
            community_id: part.community(i),
            band: assign_band(percent_change)?,
            percent_change,
            census,
        });
    }
    Ok(CommunityAllocation { rows })
}

impl CommunityAllocation {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        writeln!(out, "{ALLOCATION_HEADER}").unwrap();
        for r in &self.rows {
            let c = &r.census;
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record([
                r.fips.clone(),
                r.community_id.to_string(),
                r.band.name().to_string(),
                format_percent(r.percent_change),
                c.county_name.clone(),
                c.state.clone(),
                c.lat.to_string(),
                c.lon.to_string(),
                c.population_density.to_string(),
                c.median_household_income.to_string(),
                c.pct_high_school.to_string(),
            ])
            .expect("writing to memory");
            out.extend(w.into_inner().expect("writing to memory"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::ingestion::write_atomic(path, &self.to_csv_bytes())
            .map(|_| ())
            .map_err(|e| MlnError::Io(path.to_path_buf(), e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            fips: String,
            community_id: usize,
            band: String,
            percent_change: String,
            county: String,
            state: String,
            lat: f64,
            lon: f64,
            population_density: f64,
            median_household_income: f64,
            pct_high_school: f64,
        }
        let bad = |e: String| MlnError::Format(path.to_path_buf(), e);
        let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut rows = Vec::new();
        for raw in rdr.deserialize::<Raw>() {
            let raw = raw.map_err(|e| bad(e.to_string()))?;
            let percent_change: f64 = raw
                .percent_change
                .parse()
                .map_err(|_| bad(format!("bad percent_change {:?}", raw.percent_change)))?;
            let band: Band = raw.band.parse()?;
            if assign_band(percent_change)? != band {
                return Err(bad(format!(
                    "{}: band {band} inconsistent with change {percent_change}",
                    raw.fips
                )));
            }
            let census = CensusRecord {
                fips: raw.fips.clone(),
                county_name: raw.county,
                state: raw.state,
                lat: raw.lat,
                lon: raw.lon,
                population_density: raw.population_density,
                median_household_income: raw.median_household_income,
                pct_high_school: raw.pct_high_school,
            };
            census.validate()?;
            rows.push(AllocationRow {
                fips: raw.fips,
                community_id: raw.community_id,
                band,
                percent_change,
                census,
            });
        }
        Ok(Self { rows })
    }
}

fn format_percent(p: f64) -> String {
    if p == f64::INFINITY {
        "inf".to_string()
    } else {
        p.to_string()
    }
}
