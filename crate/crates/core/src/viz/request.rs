use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VizError;
use crate::ingestion::RegionId;
use crate::period::DateRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VizKind {
    Timeline,
    Map,
}

impl VizKind {
    pub const ALL: [VizKind; 2] = [VizKind::Timeline, VizKind::Map];

    pub fn as_str(self) -> &'static str {
        match self {
            VizKind::Timeline => "TIMELINE",
            VizKind::Map => "MAP",
        }
    }

    /// Directory and index-file stem used by the cache.
    pub fn dir_name(self) -> &'static str {
        match self {
            VizKind::Timeline => "timeline",
            VizKind::Map => "map",
        }
    }
}

impl fmt::Display for VizKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VizKind {
    type Err = VizError;

    fn from_str(s: &str) -> Result<Self, VizError> {
        VizKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| VizError::UnknownKind(s.to_string()))
    }
}

/// A visualization request: its kind plus `(name, value)` parameters.
///
/// Requests built through [`VizRequest::normalized`], [`VizRequest::map`] or
/// [`VizRequest::timeline`] are canonical; [`canonical_key`] rejects any
/// other.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VizRequest {
    pub kind: VizKind,
    pub params: Vec<(String, String)>,
}

/// Parameters holding feature names; normalised to lowercase.
const FEATURE_PARAMS: [&str; 3] = ["feature", "left", "right"];
/// Parameters holding date ranges; normalised to `YYYY-MM-DD:YYYY-MM-DD`.
const RANGE_PARAMS: [&str; 3] = ["pa", "pb", "range"];
/// Characters reserved by the key grammar.
const RESERVED: [char; 3] = ['|', '&', '='];

fn normalize_value(name: &str, value: &str) -> Result<String, VizError> {
    let bad = |why: &str| VizError::BadParam {
        name: name.to_string(),
        reason: why.to_string(),
    };
    let value = value.trim();
    if value.is_empty() {
        return Err(bad("empty value"));
    }
    if value.contains(RESERVED) {
        return Err(bad("value contains a reserved character (| & =)"));
    }
    if FEATURE_PARAMS.contains(&name) {
        return Ok(value.to_lowercase());
    }
    if RANGE_PARAMS.contains(&name) {
        return value
            .parse::<DateRange>()
            .map(|r| r.to_string())
            .map_err(|e| bad(&e.to_string()));
    }
    if name == "states" {
        let mut states: Vec<String> = value
            .split(',')
            .map(|s| s.trim().to_uppercase())
            .filter(|s| !s.is_empty())
            .collect();
        if let Some(s) = states.iter().find(|s| !RegionId::is_state_code(s)) {
            return Err(bad(&format!("{s:?} is not a state code")));
        }
        states.sort();
        states.dedup();
        return Ok(states.join(","));
    }
    Ok(value.to_string())
}

impl VizRequest {
    /// Normalises values and sorts parameters by name.
    pub fn normalized<N, V>(kind: VizKind, params: impl IntoIterator<Item = (N, V)>) -> Result<Self, VizError>
    where
        N: AsRef<str>,
        V: AsRef<str>,
    {
        let mut out = Vec::new();
        for (name, value) in params {
            let name = name.as_ref().trim().to_lowercase();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                return Err(VizError::BadParam {
                    name,
                    reason: "names must match [a-z0-9_]+".into(),
                });
            }
            let value = normalize_value(&name, value.as_ref())?;
            out.push((name, value));
        }
        out.sort();
        if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(VizError::BadParam {
                name: w[0].0.clone(),
                reason: "given more than once".into(),
            });
        }
        Ok(Self { kind, params: out })
    }

    pub fn map(feature: &str, pa: DateRange, pb: DateRange) -> Result<Self, VizError> {
        Self::normalized(
            VizKind::Map,
            [
                ("feature", feature.to_string()),
                ("pa", pa.to_string()),
                ("pb", pb.to_string()),
            ],
        )
    }

    pub fn timeline(
        states: &[String],
        left: &str,
        right: &str,
        range: DateRange,
    ) -> Result<Self, VizError> {
        Self::normalized(
            VizKind::Timeline,
            [
                ("left", left.to_string()),
                ("range", range.to_string()),
                ("right", right.to_string()),
                ("states", states.join(",")),
            ],
        )
    }

    pub fn param(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

/// `KIND|name=value&name=value...` in parameter-name order. The whole string
/// is the cache key, so distinct canonical requests never share a key.
pub fn canonical_key(req: &VizRequest) -> Result<String, VizError> {
    let canonical = VizRequest::normalized(req.kind, req.params.iter().map(|(n, v)| (n, v)))?;
    if canonical.params != req.params {
        return Err(VizError::NotCanonical);
    }
    let body: Vec<String> = req.params.iter().map(|(n, v)| format!("{n}={v}")).collect();
    Ok(format!("{}|{}", req.kind, body.join("&")))
}

/// Kind encoded in the prefix of a canonical key.
pub fn key_kind(key: &str) -> Result<VizKind, VizError> {
    let (prefix, _) = key
        .split_once('|')
        .ok_or_else(|| VizError::UnknownKind(key.to_string()))?;
    VizKind::ALL
        .into_iter()
        .find(|k| k.as_str() == prefix)
        .ok_or_else(|| VizError::UnknownKind(prefix.to_string()))
}
