use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{MlnError, Result};
use crate::period::Period;

/// Severity band of a percentage change between two periods.
///
/// Variants are declared from most to least severe, so the derived ordering
/// ranks `Spike` lowest; use [`Band::severity`] for explicit comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Band {
    /// More than +100%.
    Spike,
    /// (+50%, +100%].
    HighRise,
    /// (0%, +50%].
    Rise,
    /// Exactly 0%.
    NoChange,
    /// [-50%, 0%).
    Dip,
    /// (-100%, -50%).
    LargeDip,
    /// Exactly -100%.
    BigDip,
}

impl Band {
    /// All bands, most severe first.
    pub const ALL: [Band; 7] = [
        Band::Spike,
        Band::HighRise,
        Band::Rise,
        Band::NoChange,
        Band::Dip,
        Band::LargeDip,
        Band::BigDip,
    ];

    /// 6 for `Spike` down to 0 for `BigDip`.
    pub fn severity(self) -> u8 {
        6 - self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Spike => "SPIKE",
            Band::HighRise => "HIGH_RISE",
            Band::Rise => "RISE",
            Band::NoChange => "NO_CHANGE",
            Band::Dip => "DIP",
            Band::LargeDip => "LARGE_DIP",
            Band::BigDip => "BIG_DIP",
        }
    }

    /// Lower bound of the band and whether it is included.
    pub fn lower(self) -> (f64, bool) {
        match self {
            Band::Spike => (100.0, false),
            Band::HighRise => (50.0, false),
            Band::Rise => (0.0, false),
            Band::NoChange => (0.0, true),
            Band::Dip => (-50.0, true),
            Band::LargeDip => (-100.0, false),
            Band::BigDip => (-100.0, true),
        }
    }

    /// Upper bound of the band and whether it is included.
    pub fn upper(self) -> (f64, bool) {
        match self {
            Band::Spike => (f64::INFINITY, true),
            Band::HighRise => (100.0, true),
            Band::Rise => (50.0, true),
            Band::NoChange => (0.0, true),
            Band::Dip => (0.0, false),
            Band::LargeDip => (-50.0, false),
            Band::BigDip => (-100.0, true),
        }
    }

    pub fn contains(self, p: f64) -> bool {
        let (lo, lo_inc) = self.lower();
        let (hi, hi_inc) = self.upper();
        let above = if lo_inc { p >= lo } else { p > lo };
        let below = if hi_inc { p <= hi } else { p < hi };
        above && below
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = MlnError;

    fn from_str(s: &str) -> Result<Self> {
        Band::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| MlnError::UnknownBand(s.to_string()))
    }
}

/// Maps a percentage change in `[-100, +inf]` to its band.
pub fn assign_band(p: f64) -> Result<Band> {
    if p.is_nan() || p < -100.0 {
        return Err(MlnError::PercentOutOfRange(p));
    }
    Ok(if p > 100.0 {
        Band::Spike
    } else if p > 50.0 {
        Band::HighRise
    } else if p > 0.0 {
        Band::Rise
    } else if p == 0.0 {
        Band::NoChange
    } else if p >= -50.0 {
        Band::Dip
    } else if p > -100.0 {
        Band::LargeDip
    } else {
        Band::BigDip
    })
}

/// Percentage change of the summed daily counts from period `a` to period
/// `b`: `100 * (S_b - S_a) / S_a`. A zero baseline gives `+inf` when `S_b`
/// is positive and `0` when both sums are zero.
pub fn percent_change(daily: &[(NaiveDate, u64)], a: &Period, b: &Period) -> Result<f64> {
    a.check_pair(b)?;
    let (mut sum_a, mut sum_b) = (0u64, 0u64);
    for &(date, count) in daily {
        if a.contains(date) {
            sum_a += count;
        } else if b.contains(date) {
            sum_b += count;
        }
    }
    Ok(match (sum_a, sum_b) {
        (0, 0) => 0.0,
        (0, _) => f64::INFINITY,
        (sa, sb) => 100.0 * (sb as f64 - sa as f64) / sa as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn periods() -> (Period, Period) {
        (
            "2020-02-18:2020-02-24".parse().unwrap(),
            "2020-03-20:2020-03-26".parse().unwrap(),
        )
    }

    fn series(a_total: u64, b_total: u64) -> Vec<(NaiveDate, u64)> {
        vec![
            (d("2020-02-10"), 999),
            (d("2020-02-18"), a_total / 2),
            (d("2020-02-24"), a_total - a_total / 2),
            (d("2020-03-01"), 555),
            (d("2020-03-26"), b_total),
        ]
    }

    #[test]
    fn percent_change_examples() {
        let (a, b) = periods();
        assert_eq!(percent_change(&series(100, 250), &a, &b).unwrap(), 150.0);
        assert_eq!(percent_change(&series(40, 0), &a, &b).unwrap(), -100.0);
        assert_eq!(percent_change(&series(0, 7), &a, &b).unwrap(), f64::INFINITY);
        assert_eq!(percent_change(&series(0, 0), &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn percent_change_rejects_bad_periods() {
        let (a, b) = periods();
        assert!(matches!(
            percent_change(&[], &b, &a),
            Err(MlnError::Period(crate::PeriodError::Order))
        ));
        let c: Period = "2020-02-20:2020-02-28".parse().unwrap();
        assert!(matches!(
            percent_change(&[], &a, &c),
            Err(MlnError::Period(crate::PeriodError::Overlap))
        ));
    }

    #[test]
    fn band_examples() {
        assert_eq!(assign_band(150.0).unwrap(), Band::Spike);
        assert_eq!(assign_band(-100.0).unwrap(), Band::BigDip);
        assert_eq!(assign_band(0.0).unwrap(), Band::NoChange);
        assert_eq!(assign_band(f64::INFINITY).unwrap(), Band::Spike);
        assert!(assign_band(-100.0001).is_err());
        assert!(assign_band(f64::NAN).is_err());
    }

    #[test]
    fn names_round_trip() {
        for b in Band::ALL {
            assert_eq!(b.name().parse::<Band>().unwrap(), b);
            assert_eq!(serde_json::to_string(&b).unwrap(), format!("\"{}\"", b.name()));
        }
        assert_eq!(Band::Spike.severity(), 6);
        assert_eq!(Band::BigDip.severity(), 0);
    }

    proptest! {
        #[test]
        fn exactly_one_band_contains_each_value(p in -100.0f64..1e7) {
            let owners: Vec<Band> = Band::ALL.into_iter().filter(|b| b.contains(p)).collect();
            prop_assert_eq!(owners.len(), 1);
            prop_assert_eq!(owners[0], assign_band(p).unwrap());
        }

        #[test]
        fn percent_change_ignores_record_order(
            mut days in prop::collection::vec((0u64..20, 0u64..500), 0..30),
            seed in any::<u64>(),
        ) {
            let (a, b) = (
                "2020-01-01:2020-01-07".parse::<Period>().unwrap(),
                "2020-01-10:2020-01-16".parse::<Period>().unwrap(),
            );
            days.sort();
            days.dedup_by_key(|x| x.0);
            let base = d("2020-01-01");
            let pts: Vec<(NaiveDate, u64)> =
                days.iter().map(|(o, c)| (base + chrono::Days::new(*o), *c)).collect();
            let mut shuffled = pts.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let x = percent_change(&pts, &a, &b).unwrap();
            let y = percent_change(&shuffled, &a, &b).unwrap();
            prop_assert!(x == y || (x.is_nan() && y.is_nan()));
        }
    }
}
