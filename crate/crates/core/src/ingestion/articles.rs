use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};
use crate::period::DateRange;

/// Keywords used when the service configuration does not list any.
pub const DEFAULT_KEYWORDS: [&str; 5] = ["covid", "coronavirus", "pandemic", "vaccine", "vaccination"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub published: DateTime<Utc>,
    pub title: String,
    #[serde(rename = "abstract")]
    pub summary: String,
    pub url: String,
}

/// Reads `id,published,title,abstract,url` with RFC 3339 timestamps.
pub fn read_articles(path: &Path) -> Result<Vec<Article>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IngestError::csv(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Article>() {
        let rec = rec.map_err(|e| IngestError::csv(path, e))?;
        if !seen.insert(rec.id.clone()) {
            return Err(IngestError::DuplicateId {
                what: "article id",
                id: rec.id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_articles(path: &Path, articles: &[Article]) -> Result<bool> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for a in articles {
        w.serialize(a).map_err(|e| IngestError::csv(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| IngestError::io(path, e.into_error()))?;
    super::write_atomic(path, &bytes).map_err(|e| IngestError::io(path, e))
}

/// Selects the `k` newest articles published within `period` whose title or
/// abstract mentions at least one keyword (case-insensitive). Articles with
/// identical timestamps are ordered by ascending id.
pub fn filter_articles(
    articles: &[Article],
    period: &DateRange,
    keywords: &[String],
    k: usize,
) -> Result<Vec<Article>> {
    if k == 0 {
        return Err(IngestError::ZeroK);
    }
    let keywords: Vec<String> = keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(IngestError::NoKeywords);
    }
    let mut hits: Vec<&Article> = articles
        .iter()
        .filter(|a| period.contains(a.published.date_naive()))
        .filter(|a| {
            let title = a.title.to_lowercase();
            let summary = a.summary.to_lowercase();
            keywords
                .iter()
                .any(|k| title.contains(k.as_str()) || summary.contains(k.as_str()))
        })
        .collect();
    hits.sort_by(|a, b| b.published.cmp(&a.published).then_with(|| a.id.cmp(&b.id)));
    Ok(hits.into_iter().take(k).cloned().collect())
}
