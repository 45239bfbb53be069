use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::clean::clean_cumulative;
use super::series::CumulativeSeries;
use super::table::RegionId;
use super::{IngestError, Result};

pub const US: &str = "US";
pub const WORLD: &str = "WORLD";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TickerRow {
    pub region: String,
    pub cases: u64,
    pub deaths: u64,
    pub as_of: NaiveDate,
}

fn latest(region: &str, cases: &CumulativeSeries, deaths: &CumulativeSeries) -> Option<TickerRow> {
    let cases = clean_cumulative(cases);
    let deaths = clean_cumulative(deaths);
    let (as_of, c) = cases.last()?;
    Some(TickerRow {
        region: region.to_string(),
        cases: c,
        deaths: deaths.as_of(as_of).unwrap_or(0),
        as_of,
    })
}

/// Latest cumulative counts for the requested regions, followed by the `US`
/// and `WORLD` rows.
///
/// `US` sums every state series at the latest date that all of them have
/// reached, so that a state that has not yet reported does not produce a
/// partial total. `WORLD` is read from its own series in the maps.
pub fn latest_ticker(
    regions: &[String],
    cases: &BTreeMap<String, CumulativeSeries>,
    deaths: &BTreeMap<String, CumulativeSeries>,
) -> Result<Vec<TickerRow>> {
    let unknown: Vec<&str> = regions
        .iter()
        .map(String::as_str)
        .filter(|r| *r != US && *r != WORLD)
        .filter(|r| !(cases.contains_key(*r) && deaths.contains_key(*r)))
        .collect();
    if !unknown.is_empty() {
        return Err(IngestError::UnknownRegion(unknown.join(", ")));
    }

    let mut rows = Vec::with_capacity(regions.len() + 2);
    for region in regions {
        if region == US || region == WORLD {
            continue;
        }
        if let Some(row) = latest(region, &cases[region], &deaths[region]) {
            rows.push(row);
        }
    }

    let states: Vec<(CumulativeSeries, CumulativeSeries)> = cases
        .iter()
        .filter(|(k, _)| RegionId::is_state_code(k) && k.as_str() != US)
        .filter_map(|(k, c)| Some((clean_cumulative(c), clean_cumulative(deaths.get(k)?))))
        .filter(|(c, _)| !c.is_empty())
        .collect();
    let frontier = states
        .iter()
        .filter_map(|(c, _)| c.last().map(|p| p.0))
        .min()
        .ok_or(IngestError::NoAggregate(US))?;
    let (us_cases, us_deaths) = states.iter().fold((0u64, 0u64), |(ca, de), (c, d)| {
        (
            ca + c.as_of(frontier).unwrap_or(0),
            de + d.as_of(frontier).unwrap_or(0),
        )
    });
    rows.push(TickerRow {
        region: US.to_string(),
        cases: us_cases,
        deaths: us_deaths,
        as_of: frontier,
    });

    let world = match (cases.get(WORLD), deaths.get(WORLD)) {
        (Some(c), Some(d)) => latest(WORLD, c, d),
        _ => None,
    }
    .ok_or(IngestError::NoAggregate(WORLD))?;
    rows.push(world);
    Ok(rows)
}
