//! Analysis configuration files and the community-detection pipeline they
//! drive.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::allocation::{categorize, make_allocation, CommunityAllocation};
use super::band::{percent_change, Band};
use super::layer::{build_layer, MlnLayer};
use super::louvain::{louvain, Partition};
use super::{MlnError, Result};
use crate::ingestion::{
    clean_cumulative, daily_new_from_cumulative, read_census, read_county_file, CensusRecord,
    CountySeries,
};
use crate::period::Period;

/// The only expression the dashboard currently issues.
pub const COMMUNITIES_EXPRESSION: &str = "communities(layer(feature, periodA, periodB))";

/// County-level features that layers can be built from.
pub const SUPPORTED_FEATURES: [&str; 2] = ["new_cases", "new_deaths"];

/// Paths of the consolidated inputs an analysis reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisInputs {
    /// County cumulative file, `fips,date,cases,deaths`.
    pub counties: PathBuf,
    pub census: PathBuf,
}

/// Configuration handed from the service to the analysis module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub expression: String,
    pub feature: String,
    pub period_a: Period,
    pub period_b: Period,
    pub inputs: AnalysisInputs,
    pub seed: u64,
}

/// Parsed form of [`AnalysisConfig::expression`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expression {
    /// `communities(layer(feature, periodA, periodB))`
    Communities(LayerExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerExpr;

impl Expression {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || MlnError::Expression(text.to_string());
        let call = parse_call(text.trim()).ok_or_else(bad)?;
        match call {
            Call { name: "communities", args } if args.len() == 1 => {
                match parse_call(args[0]).ok_or_else(bad)? {
                    Call { name: "layer", args } if args.len() == 3 => {
                        let ok = matches!(args[0], "feature")
                            && matches!(args[1], "periodA" | "period_a" | "pa")
                            && matches!(args[2], "periodB" | "period_b" | "pb");
                        if ok {
                            Ok(Expression::Communities(LayerExpr))
                        } else {
                            Err(bad())
                        }
                    }
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

struct Call<'a> {
    name: &'a str,
    args: Vec<&'a str>,
}

/// Splits `name(arg, arg, ...)` at top-level commas.
fn parse_call(text: &str) -> Option<Call<'_>> {
    let open = text.find('(')?;
    let name = text[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let inner = text[open + 1..].strip_suffix(')')?;
    let mut args = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in inner.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ',' if depth == 0 => {
                args.push(inner[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    args.push(inner[start..].trim());
    if args.iter().any(|a| a.is_empty()) {
        return None;
    }
    Some(Call { name, args })
}

impl AnalysisConfig {
    pub fn new(
        feature: &str,
        period_a: Period,
        period_b: Period,
        inputs: AnalysisInputs,
        seed: u64,
    ) -> Self {
        Self {
            expression: COMMUNITIES_EXPRESSION.to_string(),
            feature: feature.to_string(),
            period_a,
            period_b,
            inputs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<Expression> {
        let expr = Expression::parse(&self.expression)?;
        if !SUPPORTED_FEATURES.contains(&self.feature.as_str()) {
            return Err(MlnError::UnknownFeature(self.feature.clone()));
        }
        self.period_a.check_pair(&self.period_b)?;
        Ok(expr)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MlnError::Io(path.to_path_buf(), e))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| MlnError::Format(path.to_path_buf(), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn layer_name(&self) -> String {
        format!("{}:{}->{}", self.feature, self.period_a, self.period_b)
    }
}

/// Everything the pipeline produced for one configuration.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub changes: BTreeMap<String, f64>,
    pub layer: MlnLayer,
    pub partition: Partition,
    pub categories: BTreeMap<usize, Band>,
    pub allocation: CommunityAllocation,
}

/// Percentage change of `feature` between the two periods for every county.
pub fn county_changes(
    counties: &BTreeMap<String, CountySeries>,
    feature: &str,
    a: &Period,
    b: &Period,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (fips, series) in counties {
        let cumulative = match feature {
            "new_cases" => &series.cases,
            "new_deaths" => &series.deaths,
            other => return Err(MlnError::UnknownFeature(other.to_string())),
        };
        let daily = daily_new_from_cumulative(&clean_cumulative(cumulative))?;
        out.insert(fips.clone(), percent_change(&daily, a, b)?);
    }
    Ok(out)
}

/// Runs `communities(layer(feature, periodA, periodB))` over in-memory data:
/// percentage change, band layer, Louvain, categorisation and census
/// enrichment.
pub fn run_analysis(
    config: &AnalysisConfig,
    counties: &BTreeMap<String, CountySeries>,
    census: &BTreeMap<String, CensusRecord>,
) -> Result<AnalysisOutput> {
    match config.validate()? {
        Expression::Communities(LayerExpr) => {}
    }
    let changes = county_changes(counties, &config.feature, &config.period_a, &config.period_b)?;
    let layer = build_layer(&changes, &config.layer_name())?;
    let partition = louvain(&layer, config.seed)?;
    let categories = categorize(&layer, &partition);
    let allocation = make_allocation(&layer, &partition, &changes, census)?;
    Ok(AnalysisOutput {
        changes,
        layer,
        partition,
        categories,
        allocation,
    })
}

/// Loads the inputs named in `config` and runs the analysis.
pub fn run_analysis_files(config: &AnalysisConfig) -> Result<AnalysisOutput> {
    config.validate()?;
    let counties = read_county_file(&config.inputs.counties)?;
    let census = read_census(&config.inputs.census)?;
    run_analysis(config, &counties, &census)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::CumulativeSeries;
    use chrono::NaiveDate;

    fn inputs() -> AnalysisInputs {
        AnalysisInputs {
            counties: "counties.csv".into(),
            census: "census.csv".into(),
        }
    }

    fn config() -> AnalysisConfig {
        AnalysisConfig::new(
            "new_cases",
            "2020-02-18:2020-02-24".parse().unwrap(),
            "2020-03-20:2020-03-26".parse().unwrap(),
            inputs(),
            42,
        )
    }

    #[test]
    fn expression_grammar() {
        for ok in [
            COMMUNITIES_EXPRESSION,
            "communities(layer(feature, pa, pb))",
            " communities( layer(feature,period_a,period_b) ) ",
        ] {
            assert!(Expression::parse(ok).is_ok(), "{ok}");
        }
        for bad in [
            "",
            "layer(feature, pa, pb)",
            "communities(layer(feature, pb))",
            "communities(layer(feature, pa, pb)",
            "centrality(layer(feature, pa, pb))",
            "communities(layer(feature, pa, pb)) extra",
        ] {
            assert!(Expression::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn config_json_shape() {
        let json: serde_json::Value = serde_json::from_str(&config().to_json()).unwrap();
        assert_eq!(json["expression"], COMMUNITIES_EXPRESSION);
        assert_eq!(json["period_a"]["start"], "2020-02-18");
        assert_eq!(json["inputs"]["counties"], "counties.csv");
        assert_eq!(json["seed"], 42);
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.feature = "hospitalizations".into();
        assert!(matches!(c.validate(), Err(MlnError::UnknownFeature(_))));
        let mut c = config();
        std::mem::swap(&mut c.period_a, &mut c.period_b);
        assert!(c.validate().is_err());
    }

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn county(points: &[(&str, u64)]) -> CountySeries {
        let pts: Vec<_> = points.iter().map(|(s, c)| (d(s), *c)).collect();
        CountySeries {
            cases: CumulativeSeries::new("x", pts.clone()).unwrap(),
            deaths: CumulativeSeries::new("x", pts.iter().map(|p| (p.0, 0)).collect()).unwrap(),
        }
    }

    #[test]
    fn pipeline_end_to_end() {
        let mut counties = BTreeMap::new();
        // 10 new cases in period a, 30 in b: +200% (SPIKE).
        counties.insert("00001".to_string(), county(&[("2020-02-17", 5), ("2020-02-20", 15), ("2020-03-21", 45)]));
        counties.insert("00002".to_string(), county(&[("2020-02-17", 0), ("2020-02-20", 10), ("2020-03-21", 40)]));
        // 10 then 0: -100% (BIG_DIP).
        counties.insert("00003".to_string(), county(&[("2020-02-17", 0), ("2020-02-20", 10), ("2020-03-21", 10)]));
        let census = counties
            .keys()
            .map(|f| {
                (
                    f.clone(),
                    CensusRecord {
                        fips: f.clone(),
                        county_name: "C".into(),
                        state: "TX".into(),
                        lat: 0.0,
                        lon: 0.0,
                        population_density: 1.0,
                        median_household_income: 1.0,
                        pct_high_school: 50.0,
                    },
                )
            })
            .collect();
        let out = run_analysis(&config(), &counties, &census).unwrap();
        assert_eq!(out.changes["00001"], 200.0);
        assert_eq!(out.changes["00003"], -100.0);
        assert_eq!(out.partition.num_communities(), 2);
        assert_eq!(out.categories, BTreeMap::from([(0, Band::Spike), (1, Band::BigDip)]));
        assert_eq!(out.allocation.len(), 3);
    }
}
