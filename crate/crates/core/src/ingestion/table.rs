use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};

/// A 2-letter state code (`TX`) or a 5-digit county FIPS code (`48201`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RegionId(String);

impl RegionId {
    pub fn parse(s: &str) -> Result<Self> {
        if Self::is_state_code(s) || Self::is_fips(s) {
            Ok(RegionId(s.to_string()))
        } else {
            Err(IngestError::InvalidRegion(s.to_string()))
        }
    }

    pub fn is_state_code(s: &str) -> bool {
        s.len() == 2 && s.bytes().all(|b| b.is_ascii_uppercase())
    }

    pub fn is_fips(s: &str) -> bool {
        s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit())
    }

    pub fn is_state(&self) -> bool {
        Self::is_state_code(&self.0)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RegionId {
    type Error = IngestError;

    fn try_from(s: String) -> Result<Self> {
        RegionId::parse(&s)
    }
}

impl From<RegionId> for String {
    fn from(r: RegionId) -> String {
        r.0
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One region on one day with the feature values known for it.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub region_id: RegionId,
    pub date: NaiveDate,
    pub features: BTreeMap<String, f64>,
}

impl DailyRecord {
    pub fn new(region_id: RegionId, date: NaiveDate) -> Self {
        Self {
            region_id,
            date,
            features: BTreeMap::new(),
        }
    }

    pub fn with(mut self, feature: &str, value: f64) -> Self {
        self.features.insert(feature.to_string(), value);
        self
    }
}

type Row = Vec<Option<f64>>;

/// A table of daily records keyed by `(region, date)`.
///
/// Feature columns are kept in sorted order and missing values are explicit
/// `None`s, never zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyTable {
    key_column: String,
    features: Vec<String>,
    rows: BTreeMap<(RegionId, NaiveDate), Row>,
}

fn check_value(region: &RegionId, date: NaiveDate, feature: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(IngestError::InvalidValue {
            region: region.to_string(),
            date,
            feature: feature.to_string(),
            value,
        })
    }
}

impl DailyTable {
    pub fn empty(key_column: &str) -> Self {
        Self {
            key_column: key_column.to_string(),
            features: Vec::new(),
            rows: BTreeMap::new(),
        }
    }

    /// Builds a table from records. The column set is the union of all
    /// record features.
    pub fn from_records(
        key_column: &str,
        records: impl IntoIterator<Item = DailyRecord>,
    ) -> Result<Self> {
        let records: Vec<DailyRecord> = records.into_iter().collect();
        let features: Vec<String> = records
            .iter()
            .flat_map(|r| r.features.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut rows = BTreeMap::new();
        for rec in records {
            let mut row = vec![None; features.len()];
            for (name, value) in &rec.features {
                check_value(&rec.region_id, rec.date, name, *value)?;
                let idx = features.binary_search(name).expect("feature collected above");
                row[idx] = Some(*value);
            }
            let key = (rec.region_id, rec.date);
            if rows.contains_key(&key) {
                return Err(IngestError::DuplicateRow {
                    region: key.0.to_string(),
                    date: key.1,
                });
            }
            rows.insert(key, row);
        }
        Ok(Self {
            key_column: key_column.to_string(),
            features,
            rows,
        })
    }

    pub fn key_column(&self) -> &str {
        &self.key_column
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn has_feature(&self, feature: &str) -> bool {
        self.features.binary_search_by(|f| f.as_str().cmp(feature)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn regions(&self) -> BTreeSet<&RegionId> {
        self.rows.keys().map(|(r, _)| r).collect()
    }

    pub fn has_region(&self, region: &str) -> bool {
        self.rows.keys().any(|(r, _)| r.as_str() == region)
    }

    /// Value of `feature` for `region` on `date`; `None` when the row or the
    /// value is missing.
    pub fn value(&self, region: &str, date: NaiveDate, feature: &str) -> Option<f64> {
        let idx = self
            .features
            .binary_search_by(|f| f.as_str().cmp(feature))
            .ok()?;
        let region = RegionId::parse(region).ok()?;
        self.rows.get(&(region, date)).and_then(|row| row[idx])
    }

    /// Rows in `(region, date)` order as `(region, date, values)` with values
    /// aligned to [`features`](Self::features).
    pub fn rows(&self) -> impl Iterator<Item = (&RegionId, NaiveDate, &[Option<f64>])> {
        self.rows.iter().map(|((r, d), v)| (r, *d, v.as_slice()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn from_reader(reader: impl Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| IngestError::csv(path, e))?.clone();
        if headers.len() < 2 || &headers[1] != "date" {
            return Err(IngestError::format(
                path,
                "expected header `<region>,date,<features...>`",
            ));
        }
        let key_column = headers[0].to_string();
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| IngestError::csv(path, e))?;
            let region = RegionId::parse(rec.get(0).unwrap_or_default().trim())?;
            let date = parse_date(rec.get(1).unwrap_or_default(), path, line)?;
            let mut out = DailyRecord::new(region, date);
            for (i, name) in names.iter().enumerate() {
                let cell = rec.get(i + 2).unwrap_or_default().trim();
                if cell.is_empty() {
                    continue;
                }
                let value: f64 = cell.parse().map_err(|_| {
                    IngestError::format(
                        path,
                        format!("line {}: {name} value {cell:?} is not a number", line + 2),
                    )
                })?;
                out.features.insert(name.clone(), value);
            }
            records.push(out);
        }
        let mut table = Self::from_records(&key_column, records)?;
        // Keep declared columns even when they hold no values.
        let declared: BTreeSet<String> = names.into_iter().collect();
        if declared.len() != table.features.len() {
            table = table.with_columns(declared);
        }
        Ok(table)
    }

    fn with_columns(self, columns: BTreeSet<String>) -> Self {
        let features: Vec<String> = columns.into_iter().collect();
        let rows = self
            .rows
            .into_iter()
            .map(|(k, row)| {
                let new_row = features
                    .iter()
                    .map(|f| {
                        self.features
                            .binary_search(f)
                            .ok()
                            .and_then(|i| row[i])
                    })
                    .collect();
                (k, new_row)
            })
            .collect();
        Self {
            key_column: self.key_column,
            features,
            rows,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<bool> {
        let bytes = self.to_csv_bytes();
        super::write_atomic(path, &bytes).map_err(|e| IngestError::io(path, e))
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write!(out, "{},date", self.key_column).unwrap();
        for f in &self.features {
            write!(out, ",{f}").unwrap();
        }
        out.push(b'\n');
        for ((region, date), row) in &self.rows {
            write!(out, "{region},{}", date.format("%Y-%m-%d")).unwrap();
            for v in row {
                match v {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(b','),
                }
            }
            out.push(b'\n');
        }
        out
    }
}

pub(crate) fn parse_date(cell: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell.trim(), "%Y-%m-%d").map_err(|_| {
        IngestError::format(
            path,
            format!("line {}: date {cell:?} is not ISO-8601 (YYYY-MM-DD)", line + 2),
        )
    })
}

/// Merges per-source tables into one row per `(region, date)` holding the
/// union of all feature columns. Two sources giving different values for the
/// same cell is an error.
pub fn consolidate(tables: &[DailyTable]) -> Result<DailyTable> {
    let Some(first) = tables.first() else {
        return Ok(DailyTable::empty("state"));
    };
    for t in tables {
        if t.key_column != first.key_column {
            return Err(IngestError::KeyColumn(
                first.key_column.clone(),
                t.key_column.clone(),
            ));
        }
    }
    let features: Vec<String> = tables
        .iter()
        .flat_map(|t| t.features.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows: BTreeMap<(RegionId, NaiveDate), Row> = BTreeMap::new();
    for t in tables {
        let mapping: Vec<usize> = t
            .features
            .iter()
            .map(|f| features.binary_search(f).expect("union contains every column"))
            .collect();
        for (key, row) in &t.rows {
            let merged = rows
                .entry(key.clone())
                .or_insert_with(|| vec![None; features.len()]);
            for (src, value) in row.iter().enumerate() {
                let Some(value) = *value else { continue };
                let slot = &mut merged[mapping[src]];
                match *slot {
                    Some(existing) if existing != value => {
                        let (first, second) = if existing < value {
                            (existing, value)
                        } else {
                            (value, existing)
                        };
                        return Err(IngestError::Conflict {
                            region: key.0.to_string(),
                            date: key.1,
                            feature: features[mapping[src]].clone(),
                            first,
                            second,
                        });
                    }
                    _ => *slot = Some(value),
                }
            }
        }
    }
    Ok(DailyTable {
        key_column: first.key_column.clone(),
        features,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, day).unwrap()
    }

    fn r(s: &str) -> RegionId {
        RegionId::parse(s).unwrap()
    }

    fn single(feature: &str, cells: &[(&str, u32, f64)]) -> DailyTable {
        DailyTable::from_records(
            "state",
            cells
                .iter()
                .map(|(s, day, v)| DailyRecord::new(r(s), d(*day)).with(feature, *v)),
        )
        .unwrap()
    }

    #[test]
    fn region_ids() {
        assert!(RegionId::parse("TX").is_ok());
        assert!(RegionId::parse("48201").is_ok());
        for bad in ["tx", "TEX", "4820", "4820a", "", "WORLD"] {
            assert!(RegionId::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_negative_and_nan() {
        for v in [-1.0, f64::NAN, f64::INFINITY] {
            let err = DailyTable::from_records(
                "state",
                [DailyRecord::new(r("TX"), d(1)).with("cases", v)],
            );
            assert!(matches!(err, Err(IngestError::InvalidValue { .. })));
        }
    }

    #[test]
    fn rejects_duplicate_rows() {
        let err = DailyTable::from_records(
            "state",
            [
                DailyRecord::new(r("TX"), d(1)).with("cases", 1.0),
                DailyRecord::new(r("TX"), d(1)).with("deaths", 1.0),
            ],
        );
        assert!(matches!(err, Err(IngestError::DuplicateRow { .. })));
    }

    #[test]
    fn consolidate_two_features_two_states_three_days() {
        let mut cases = Vec::new();
        let mut vacc = Vec::new();
        for (i, s) in ["CA", "TX"].iter().enumerate() {
            for day in 1..=3u32 {
                cases.push((*s, day, (10 * i as u32 + day) as f64));
                vacc.push((*s, day, (100 * i as u32 + day) as f64));
            }
        }
        let out = consolidate(&[single("cases", &cases), single("vaccinations", &vacc)]).unwrap();
        assert_eq!(out.features(), ["cases", "vaccinations"]);
        assert_eq!(out.len(), 6);
        // Hand-built expectation from the 12 input cells.
        let expected = [
            ("CA", 1, 1.0, 1.0),
            ("CA", 2, 2.0, 2.0),
            ("CA", 3, 3.0, 3.0),
            ("TX", 1, 11.0, 101.0),
            ("TX", 2, 12.0, 102.0),
            ("TX", 3, 13.0, 103.0),
        ];
        let got: Vec<_> = out.rows().collect();
        for ((region, date, row), (s, day, c, v)) in got.iter().zip(expected) {
            assert_eq!(region.as_str(), s);
            assert_eq!(*date, d(day));
            assert_eq!(*row, [Some(c), Some(v)]);
        }
    }

    #[test]
    fn consolidate_single_table_is_identity() {
        let t = DailyTable::from_records(
            "state",
            [DailyRecord::new(r("TX"), d(1)).with("zeta", 1.0).with("alpha", 2.0)],
        )
        .unwrap();
        let out = consolidate(std::slice::from_ref(&t)).unwrap();
        assert_eq!(out, t);
        assert_eq!(out.features(), ["alpha", "zeta"]);
    }

    #[test]
    fn consolidate_disjoint_regions_fills_nulls() {
        let a = single("cases", &[("CA", 1, 5.0)]);
        let b = single("trips", &[("TX", 1, 7.0)]);
        let out = consolidate(&[a, b]).unwrap();
        let rows: Vec<_> = out.rows().map(|(r, d, v)| (r.to_string(), d, v.to_vec())).collect();
        assert_eq!(
            rows,
            vec![
                ("CA".to_string(), d(1), vec![Some(5.0), None]),
                ("TX".to_string(), d(1), vec![None, Some(7.0)]),
            ]
        );
    }

    #[test]
    fn consolidate_conflict_names_cell() {
        let a = single("cases", &[("CA", 1, 5.0)]);
        let b = single("cases", &[("CA", 1, 6.0)]);
        let err = consolidate(&[a, b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("CA") && msg.contains("cases"), "{msg}");
    }

    #[test]
    fn consolidate_agreeing_overlap_is_fine() {
        let a = single("cases", &[("CA", 1, 5.0)]);
        let out = consolidate(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn csv_round_trip_keeps_nulls() {
        let a = single("cases", &[("CA", 1, 5.5)]);
        let b = single("trips", &[("TX", 2, 7.0)]);
        let t = consolidate(&[a, b]).unwrap();
        let bytes = t.to_csv_bytes();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "state,date,cases,trips\nCA,2021-01-01,5.5,\nTX,2021-01-02,,7\n"
        );
        let back = DailyTable::from_reader(bytes.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_rejects_bad_dates() {
        let bytes = b"state,date,cases\nCA,01/02/2021,5\n";
        let err = DailyTable::from_reader(&bytes[..], Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("ISO-8601"));
    }
}
