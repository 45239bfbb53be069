use std::path::{Path, PathBuf};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{write_atomic, IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    LocalFile,
    HttpFetch,
}

/// Where one raw input comes from and how often it is expected to change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    pub location: String,
    /// Expected update interval in seconds; informational for schedulers.
    #[serde(default = "default_schedule_hint")]
    pub schedule_hint: u64,
}

fn default_schedule_hint() -> u64 {
    86_400
}

impl SourceDescriptor {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| IngestError::InvalidSource {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(bad("name must be a non-empty [A-Za-z0-9_-] identifier"));
        }
        if self.location.trim().is_empty() {
            return Err(bad("location is empty"));
        }
        if self.kind == SourceKind::HttpFetch {
            match reqwest::Url::parse(&self.location) {
                Ok(url) if url.scheme() == "http" || url.scheme() == "https" => {}
                _ => return Err(bad("http_fetch location must be an http(s) URL")),
            }
        }
        Ok(())
    }

    /// File name used for the raw copy under the destination directory.
    pub fn raw_file_name(&self) -> String {
        let ext = Path::new(self.location.split(['?', '#']).next().unwrap_or_default())
            .extension()
            .and_then(|e| e.to_str())
            .filter(|e| !e.is_empty() && e.len() <= 8)
            .unwrap_or("csv");
        format!("{}.{}", self.name, ext)
    }
}

/// Reads a JSON list of source descriptors. Relative `local_file` locations
/// are resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<SourceDescriptor>> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let mut sources: Vec<SourceDescriptor> =
        serde_json::from_str(&text).map_err(|e| IngestError::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for s in &mut sources {
        s.validate()?;
        if s.kind == SourceKind::LocalFile && Path::new(&s.location).is_relative() {
            s.location = base.join(&s.location).to_string_lossy().into_owned();
        }
    }
    Ok(sources)
}

/// Retrieves remote documents.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

/// Blocking HTTP(S) fetcher. Must not be called from inside an async runtime
/// worker thread.
pub struct HttpFetcher {
    timeout: Duration,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        Self { timeout }
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        let resp = client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| e.to_string())?;
        resp.bytes().map(|b| b.to_vec()).map_err(|e| e.to_string())
    }
}

/// One manifest entry produced by [`fetch_sources`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FetchedSource {
    pub name: String,
    pub path: PathBuf,
    /// The source could not be refreshed; `path` holds the previous copy if
    /// `present` is set.
    pub stale: bool,
    pub present: bool,
    pub changed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Materializes every source as a raw file under `dest`.
///
/// Failing to write into `dest` is fatal. A source that cannot be read is
/// flagged stale and any earlier copy under `dest` is left in place.
pub fn fetch_sources(
    descriptors: &[SourceDescriptor],
    dest: &Path,
    fetcher: &dyn Fetcher,
) -> Result<Vec<FetchedSource>> {
    let destination = |source| IngestError::Destination {
        path: dest.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dest).map_err(destination)?;
    let probe = dest.join(".write-probe");
    std::fs::write(&probe, b"").map_err(destination)?;
    let _ = std::fs::remove_file(&probe);

    let mut manifest = Vec::with_capacity(descriptors.len());
    for desc in descriptors {
        desc.validate()?;
        let path = dest.join(desc.raw_file_name());
        let fetched = match desc.kind {
            SourceKind::LocalFile => std::fs::read(&desc.location).map_err(|e| e.to_string()),
            SourceKind::HttpFetch => fetcher.fetch(&desc.location),
        };
        let entry = match fetched {
            Ok(bytes) => {
                let changed = write_atomic(&path, &bytes).map_err(destination)?;
                FetchedSource {
                    name: desc.name.clone(),
                    path,
                    stale: false,
                    present: true,
                    changed,
                    error: None,
                }
            }
            Err(error) => {
                warn!("source {} ({}) not refreshed: {error}", desc.name, desc.location);
                FetchedSource {
                    name: desc.name.clone(),
                    present: path.is_file(),
                    path,
                    stale: true,
                    changed: false,
                    error: Some(error),
                }
            }
        };
        manifest.push(entry);
    }
    Ok(manifest)
}
