use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest analysis window accepted for a [`Period`], in days.
pub const MAX_PERIOD_DAYS: i64 = 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeriodError {
    #[error("period start {start} is after end {end}")]
    Inverted { start: NaiveDate, end: NaiveDate },
    #[error("period {0} spans {1} days, analysis windows must span 1 to {MAX_PERIOD_DAYS} days")]
    Length(DateRange, i64),
    #[error("malformed period {0:?}, expected YYYY-MM-DD:YYYY-MM-DD")]
    Malformed(String),
    #[error("periods overlap")]
    Overlap,
    #[error("second period must start after the first one ends")]
    Order,
}

/// An inclusive range of calendar days with `start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRange")]
pub struct DateRange {
    start: NaiveDate,
    end: NaiveDate,
}

#[derive(Deserialize)]
struct RawRange {
    start: NaiveDate,
    end: NaiveDate,
}

impl TryFrom<RawRange> for DateRange {
    type Error = PeriodError;

    fn try_from(raw: RawRange) -> Result<Self, Self::Error> {
        DateRange::new(raw.start, raw.end)
    }
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, PeriodError> {
        if start > end {
            return Err(PeriodError::Inverted { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    /// Number of days covered, counting both ends.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn iter_days(&self) -> impl Iterator<Item = NaiveDate> {
        let end = self.end;
        self.start.iter_days().take_while(move |d| *d <= end)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.format("%Y-%m-%d"), self.end.format("%Y-%m-%d"))
    }
}

impl FromStr for DateRange {
    type Err = PeriodError;

    /// Parses `YYYY-MM-DD:YYYY-MM-DD` (also accepts `..` as the separator).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || PeriodError::Malformed(s.to_string());
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once(':'))
            .ok_or_else(malformed)?;
        let start = NaiveDate::parse_from_str(a.trim(), "%Y-%m-%d").map_err(|_| malformed())?;
        let end = NaiveDate::parse_from_str(b.trim(), "%Y-%m-%d").map_err(|_| malformed())?;
        DateRange::new(start, end)
    }
}

/// An analysis window: a [`DateRange`] spanning between 1 and
/// [`MAX_PERIOD_DAYS`] days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "DateRange", into = "DateRange")]
pub struct Period(DateRange);

impl Period {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, PeriodError> {
        Self::try_from(DateRange::new(start, end)?)
    }

    pub fn range(&self) -> DateRange {
        self.0
    }

    pub fn start(&self) -> NaiveDate {
        self.0.start
    }

    pub fn end(&self) -> NaiveDate {
        self.0.end
    }

    pub fn days(&self) -> i64 {
        self.0.days()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.0.contains(date)
    }

    /// Checks that `self` and `later` are disjoint and in chronological order.
    pub fn check_pair(&self, later: &Period) -> Result<(), PeriodError> {
        if self.0.overlaps(&later.0) {
            return Err(PeriodError::Overlap);
        }
        if later.start() < self.start() {
            return Err(PeriodError::Order);
        }
        Ok(())
    }
}

impl TryFrom<DateRange> for Period {
    type Error = PeriodError;

    fn try_from(range: DateRange) -> Result<Self, Self::Error> {
        let days = range.days();
        if !(1..=MAX_PERIOD_DAYS).contains(&days) {
            return Err(PeriodError::Length(range, days));
        }
        Ok(Period(range))
    }
}

impl From<Period> for DateRange {
    fn from(p: Period) -> Self {
        p.0
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Period {
    type Err = PeriodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Period::try_from(s.parse::<DateRange>()?)
    }
}
