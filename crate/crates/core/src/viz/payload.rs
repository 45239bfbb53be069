use std::collections::HashSet;

use chrono::NaiveDate;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use super::VizError;
use crate::ingestion::DailyTable;
use crate::mln::{Band, CommunityAllocation};
use crate::period::DateRange;

/// Most states a timeline may compare.
pub const MAX_TIMELINE_STATES: usize = 5;

/// Diverging red-to-green scale, one colour per band.
pub fn band_color(band: Band) -> &'static str {
    match band {
        Band::Spike => "#b2182b",
        Band::HighRise => "#ef8a62",
        Band::Rise => "#fddbc7",
        Band::NoChange => "#f7f7f7",
        Band::Dip => "#d9f0d3",
        Band::LargeDip => "#7fbf7b",
        Band::BigDip => "#1b7837",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapCounty {
    pub fips: String,
    pub band: Band,
    pub color: &'static str,
    pub hover: String,
}

/// Choropleth data for one community allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPayload {
    pub title: String,
    pub counties: Vec<MapCounty>,
}

struct Legend;

impl Serialize for Legend {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(Band::ALL.len()))?;
        for band in Band::ALL {
            map.serialize_entry(band.name(), band_color(band))?;
        }
        map.end()
    }
}

impl Serialize for MapPayload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MapPayload", 4)?;
        st.serialize_field("kind", "map")?;
        st.serialize_field("title", &self.title)?;
        st.serialize_field("legend", &Legend)?;
        st.serialize_field("counties", &self.counties)?;
        st.end()
    }
}

impl MapPayload {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("map payload serializes")
    }
}

fn format_change(p: f64) -> String {
    if p.is_infinite() {
        "+inf%".to_string()
    } else if p > 0.0 {
        format!("+{p:.1}%")
    } else {
        format!("{p:.1}%")
    }
}

/// Builds the map payload: one coloured entry per county, with hover text
/// carrying the drill-down census attributes.
pub fn generate_map_payload(alloc: &CommunityAllocation, title: &str) -> Result<MapPayload, VizError> {
    if alloc.is_empty() {
        return Err(VizError::EmptyAllocation);
    }
    let mut seen = HashSet::with_capacity(alloc.len());
    let mut counties = Vec::with_capacity(alloc.len());
    for row in &alloc.rows {
        if !seen.insert(row.fips.as_str()) {
            return Err(VizError::DuplicateFips(row.fips.clone()));
        }
        let c = &row.census;
        let hover = format!(
            "{}, {}<br>band: {}<br>change: {}<br>population density: {:.1} per sq. mile<br>median household income: ${:.0}<br>high school graduates: {:.1}%",
            c.county_name,
            c.state,
            row.band,
            format_change(row.percent_change),
            c.population_density,
            c.median_household_income,
            c.pct_high_school,
        );
        counties.push(MapCounty {
            fips: row.fips.clone(),
            band: row.band,
            color: band_color(row.band),
            hover,
        });
    }
    Ok(MapPayload {
        title: title.to_string(),
        counties,
    })
}

/// One side of a timeline: a feature and one series per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineSide {
    pub feature: String,
    /// In requested state order; one value (or null) per axis date.
    pub series: Vec<(String, Vec<Option<f64>>)>,
}

impl Serialize for TimelineSide {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Series<'a>(&'a [(String, Vec<Option<f64>>)]);
        impl Serialize for Series<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for (state, values) in self.0 {
                    map.serialize_entry(state, values)?;
                }
                map.end()
            }
        }
        let mut st = s.serialize_struct("TimelineSide", 2)?;
        st.serialize_field("feature", &self.feature)?;
        st.serialize_field("series", &Series(&self.series))?;
        st.end()
    }
}

/// Two synchronized feature timelines over a shared date axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelinePayload {
    pub dates: Vec<NaiveDate>,
    pub left: TimelineSide,
    pub right: TimelineSide,
}

impl Serialize for TimelinePayload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let dates: Vec<String> = self.dates.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect();
        let mut st = s.serialize_struct("TimelinePayload", 4)?;
        st.serialize_field("kind", "timeline")?;
        st.serialize_field("dates", &dates)?;
        st.serialize_field("left", &self.left)?;
        st.serialize_field("right", &self.right)?;
        st.end()
    }
}

impl TimelinePayload {
    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.left.series.iter().map(|(s, _)| s.as_str())
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("timeline payload serializes")
    }
}

/// Builds side-by-side series of two features for up to five states over
/// every day of `range`. Days without data are nulls.
pub fn generate_timeline_payload(
    table: &DailyTable,
    states: &[String],
    feat_left: &str,
    feat_right: &str,
    range: DateRange,
) -> Result<TimelinePayload, VizError> {
    if states.is_empty() {
        return Err(VizError::NoStates);
    }
    if states.len() > MAX_TIMELINE_STATES {
        return Err(VizError::TooManyStates(states.len()));
    }
    let mut seen = HashSet::new();
    for s in states {
        if !seen.insert(s) {
            return Err(VizError::DuplicateState(s.clone()));
        }
        if !table.has_region(s) {
            return Err(VizError::UnknownState(s.clone()));
        }
    }
    for f in [feat_left, feat_right] {
        if !table.has_feature(f) {
            return Err(VizError::UnknownFeature(f.to_string()));
        }
    }
    let dates: Vec<NaiveDate> = range.iter_days().collect();
    let side = |feature: &str| TimelineSide {
        feature: feature.to_string(),
        series: states
            .iter()
            .map(|s| {
                let values = dates.iter().map(|d| table.value(s, *d, feature)).collect();
                (s.clone(), values)
            })
            .collect(),
    };
    Ok(TimelinePayload {
        left: side(feat_left),
        right: side(feat_right),
        dates,
    })
}
