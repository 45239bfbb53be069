use chrono::NaiveDate;

use super::series::CumulativeSeries;
use super::{IngestError, Result};

/// Repairs the cumulative-count constraint: whenever a count drops below the
/// previous (repaired) count, the previous count is carried forward.
///
/// Series that are already non-decreasing come back unchanged.
pub fn clean_cumulative(series: &CumulativeSeries) -> CumulativeSeries {
    let mut floor = 0u64;
    let points = series
        .points()
        .iter()
        .map(|&(date, count)| {
            floor = floor.max(count);
            (date, floor)
        })
        .collect();
    series.with_points(points)
}

/// First differences of a cleaned cumulative series. The first day's new
/// count is its cumulative count.
pub fn daily_new_from_cumulative(series: &CumulativeSeries) -> Result<Vec<(NaiveDate, u64)>> {
    let mut prev = 0u64;
    series
        .points()
        .iter()
        .map(|&(date, count)| {
            let new = count.checked_sub(prev).ok_or_else(|| IngestError::NotMonotonic {
                region: series.region_id().to_string(),
                date,
            })?;
            prev = count;
            Ok((date, new))
        })
        .collect()
}
