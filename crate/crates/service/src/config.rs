//! Service configuration, read from TOML or JSON.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use mlndash_core::ingestion::DEFAULT_KEYWORDS;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "MLNDASH_CONFIG";
pub const MIN_REFRESH_INTERVAL: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no configuration given; pass --config or set {CONFIG_ENV}")]
    Missing,
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Settings for `mlndash serve`.
///
/// `refresh_interval` accepts whole seconds or a string such as `"15m"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Directory with the derived data files.
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub listen_address: String,
    #[serde(default)]
    pub default_seed: u64,
    #[serde(default = "default_keywords")]
    pub keyword_list: Vec<String>,
    #[serde(
        default = "default_refresh_interval",
        deserialize_with = "de_duration",
        serialize_with = "ser_duration"
    )]
    pub refresh_interval: Duration,
    /// Source manifest for periodic refreshes. Without one, refreshing only
    /// reloads `data_dir`.
    #[serde(default)]
    pub sources: Option<PathBuf>,
    /// Where fetched raw files go; defaults to `<data_dir>/raw`.
    #[serde(default)]
    pub raw_dir: Option<PathBuf>,
    /// Per-kind cap on cached visualizations; unlimited when absent.
    #[serde(default)]
    pub cache_max_entries: Option<usize>,
}

fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

fn default_refresh_interval() -> Duration {
    Duration::from_secs(86_400)
}

fn de_duration<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Secs(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Secs(s) => Ok(Duration::from_secs(s)),
        Raw::Text(t) => humantime::parse_duration(&t).map_err(serde::de::Error::custom),
    }
}

fn ser_duration<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&humantime::format_duration(*d).to_string())
}

impl ServiceConfig {
    /// A configuration with defaults for everything but the directories.
    pub fn new(data_dir: impl Into<PathBuf>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            cache_dir: cache_dir.into(),
            listen_address: "127.0.0.1:8080".into(),
            default_seed: 0,
            keyword_list: default_keywords(),
            refresh_interval: default_refresh_interval(),
            sources: None,
            raw_dir: None,
            cache_max_entries: None,
        }
    }

    /// Parses `path` as JSON when it ends in `.json` and as TOML otherwise.
    /// Relative directories are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let parse = |e: String| ConfigError::Parse(path.to_path_buf(), e);
        let mut config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut config.data_dir, &mut config.cache_dir] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        for p in [&mut config.sources, &mut config.raw_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Loads `explicit`, falling back to the path in `MLNDASH_CONFIG`.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Err(ConfigError::Missing),
            },
        }
    }

    /// Checks invariants and creates the cache directory if needed.
    pub fn validate(&self) -> Result<SocketAddr, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !self.data_dir.is_dir() {
            return invalid(format!("data_dir {} is not a directory", self.data_dir.display()));
        }
        if let Err(e) = std::fs::read_dir(&self.data_dir) {
            return invalid(format!("data_dir {} is not readable: {e}", self.data_dir.display()));
        }
        if let Err(e) = std::fs::create_dir_all(&self.cache_dir) {
            return invalid(format!("cache_dir {}: {e}", self.cache_dir.display()));
        }
        if self.refresh_interval < MIN_REFRESH_INTERVAL {
            return invalid(format!(
                "refresh_interval must be at least 1 minute, got {}",
                humantime::format_duration(self.refresh_interval)
            ));
        }
        if self.keyword_list.iter().all(|k| k.trim().is_empty()) {
            return invalid("keyword_list is empty".into());
        }
        if let Some(s) = &self.sources {
            if !s.is_file() {
                return invalid(format!("sources manifest {} not found", s.display()));
            }
        }
        self.listen_address
            .parse()
            .or_else(|_| invalid(format!("listen_address {:?} is not host:port", self.listen_address)))
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.raw_dir.clone().unwrap_or_else(|| self.data_dir.join("raw"))
    }
}
