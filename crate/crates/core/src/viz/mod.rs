//! Visualization payloads and the materialization cache in front of them.

mod cache;
pub mod index;
mod payload;
mod request;

use std::error::Error as StdError;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use cache::{load_index, CacheEntry, CacheStatus, IndexLoad, VizCache};
pub use payload::{
    band_color, generate_map_payload, generate_timeline_payload, MapCounty, MapPayload,
    TimelinePayload, TimelineSide, MAX_TIMELINE_STATES,
};
pub use request::{canonical_key, key_kind, VizKind, VizRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VizError {
    #[error("unknown visualization kind {0:?}")]
    UnknownKind(String),
    #[error("parameter {name:?}: {reason}")]
    BadParam { name: String, reason: String },
    #[error("request parameters are not in canonical form")]
    NotCanonical,
    #[error("community allocation is empty")]
    EmptyAllocation,
    #[error("county {0} appears more than once")]
    DuplicateFips(String),
    #[error("at least one state is required")]
    NoStates,
    #[error("{0} states requested, at most {MAX_TIMELINE_STATES} allowed")]
    TooManyStates(usize),
    #[error("state {0} requested twice")]
    DuplicateState(String),
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
}

/// A generator failure, shareable between every caller waiting on it.
#[derive(Clone)]
pub struct GenerationError(Arc<dyn StdError + Send + Sync>);

impl GenerationError {
    pub fn new(msg: &str) -> Self {
        Self::from_boxed(msg.into())
    }

    pub fn from_boxed(e: Box<dyn StdError + Send + Sync>) -> Self {
        Self(Arc::from(e))
    }

    /// The original error, for callers that want to downcast it.
    pub fn inner(&self) -> &(dyn StdError + Send + Sync + 'static) {
        &*self.0
    }
}

impl fmt::Debug for GenerationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

impl fmt::Display for GenerationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error(transparent)]
    Request(#[from] VizError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: {1}")]
    Snapshot(PathBuf, index::SnapshotError),
    #[error("generation failed: {0}")]
    Generation(GenerationError),
}

impl CacheError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CacheError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
