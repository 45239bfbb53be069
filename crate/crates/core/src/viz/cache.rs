//! Persistent materialization cache for visualization payloads.
//!
//! Each visualization kind has its own in-memory hash index mapping the full
//! canonical request key to an artifact file at
//! `<root>/<kind>/<sha256(key)>.json`. Next to every artifact, a
//! `<sha256(key)>.key` file records the key so that a lost index can be
//! rebuilt by scanning the directory. Indexes are snapshotted to
//! `<root>/<kind>.idx`.

use std::collections::HashMap;
use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::SystemTime;

use chrono::{DateTime, Utc};
use log::{debug, warn};
use parking_lot::{Condvar, Mutex, RwLock};
use sha2::{Digest, Sha256};

use super::index::{self, SnapshotError};
use super::request::{canonical_key, key_kind, VizKind, VizRequest};
use super::{CacheError, GenerationError};

/// A live index entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: String,
    pub artifact_path: PathBuf,
    pub created_at: DateTime<Utc>,
    pub bytes: u64,
    pub hits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheStatus::Hit => "HIT",
            CacheStatus::Miss => "MISS",
        }
    }
}

/// How a kind's index was obtained when the cache was opened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexLoad {
    /// Read from the snapshot; dangling entries were dropped.
    Loaded { entries: usize, dropped: usize },
    /// No snapshot existed; the artifact directory was scanned.
    Scanned { entries: usize },
    /// The snapshot was unreadable; the artifact directory was scanned.
    Rebuilt { entries: usize, reason: String },
}

#[derive(Debug)]
struct Slot {
    path: PathBuf,
    created_at: DateTime<Utc>,
    bytes: u64,
    hits: AtomicU64,
}

impl Slot {
    fn entry(&self, key: &str) -> CacheEntry {
        CacheEntry {
            key: key.to_string(),
            artifact_path: self.path.clone(),
            created_at: self.created_at,
            bytes: self.bytes,
            hits: self.hits.load(Ordering::Relaxed),
        }
    }

    fn from_entry(e: CacheEntry) -> (String, Slot) {
        (
            e.key,
            Slot {
                path: e.artifact_path,
                created_at: e.created_at,
                bytes: e.bytes,
                hits: AtomicU64::new(e.hits),
            },
        )
    }
}

type FlightResult = Result<Arc<Vec<u8>>, GenerationError>;

#[derive(Default)]
struct Flight {
    result: Mutex<Option<FlightResult>>,
    done: Condvar,
}

impl Flight {
    fn publish(&self, result: FlightResult) {
        *self.result.lock() = Some(result);
        self.done.notify_all();
    }

    fn wait(&self) -> FlightResult {
        let mut guard = self.result.lock();
        while guard.is_none() {
            self.done.wait(&mut guard);
        }
        guard.as_ref().expect("checked above").clone()
    }
}

/// Removes the in-flight marker and wakes waiters even if the generator
/// panics.
struct FlightGuard<'a> {
    cache: &'a VizCache,
    key: &'a str,
    flight: Arc<Flight>,
    published: bool,
}

impl FlightGuard<'_> {
    fn finish(mut self, result: FlightResult) {
        self.cache.inflight.lock().remove(self.key);
        self.flight.publish(result);
        self.published = true;
    }
}

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        if !self.published {
            self.cache.inflight.lock().remove(self.key);
            self.flight
                .publish(Err(GenerationError::new("visualization generator panicked")));
        }
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Millisecond precision, matching the snapshot format.
fn to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).unwrap_or(t)
}

fn key_digest(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_file_name(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// Hash-indexed cache of materialized visualizations. Safe to share between
/// threads: lookups take a read lock, stores a write lock, and concurrent
/// misses on one key run the generator once.
pub struct VizCache {
    root: PathBuf,
    max_entries: Option<usize>,
    shards: [RwLock<HashMap<String, Slot>>; 2],
    inflight: Mutex<HashMap<String, Arc<Flight>>>,
    persist_lock: Mutex<()>,
    loads: Vec<(VizKind, IndexLoad)>,
}

impl VizCache {
    /// Opens (or creates) a cache under `root`, loading each kind's index
    /// snapshot and rebuilding it from the artifact directory if the
    /// snapshot is missing or corrupt. `max_entries` caps each kind's index;
    /// `None` means unbounded.
    pub fn open(root: impl Into<PathBuf>, max_entries: Option<usize>) -> Result<Self, CacheError> {
        let root = root.into();
        for kind in VizKind::ALL {
            let dir = root.join(kind.dir_name());
            std::fs::create_dir_all(&dir).map_err(|e| CacheError::io(&dir, e))?;
        }
        let mut cache = Self {
            root,
            max_entries,
            shards: Default::default(),
            inflight: Mutex::new(HashMap::new()),
            persist_lock: Mutex::new(()),
            loads: Vec::new(),
        };
        for kind in VizKind::ALL {
            let load = cache.load_kind(kind);
            match &load {
                IndexLoad::Rebuilt { reason, .. } => {
                    warn!("{} index snapshot unusable ({reason}); rebuilt from artifacts", kind)
                }
                other => debug!("{kind} index: {other:?}"),
            }
            cache.loads.push((kind, load));
        }
        Ok(cache)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// What happened to each kind's index when the cache was opened.
    pub fn index_loads(&self) -> &[(VizKind, IndexLoad)] {
        &self.loads
    }

    fn shard(&self, kind: VizKind) -> &RwLock<HashMap<String, Slot>> {
        &self.shards[kind as usize]
    }

    pub fn index_path(&self, kind: VizKind) -> PathBuf {
        self.root.join(format!("{}.idx", kind.dir_name()))
    }

    /// Where the artifact for `key` lives.
    pub fn artifact_path(&self, kind: VizKind, key: &str) -> PathBuf {
        self.root
            .join(kind.dir_name())
            .join(format!("{}.json", key_digest(key)))
    }

    fn load_kind(&self, kind: VizKind) -> IndexLoad {
        let path = self.index_path(kind);
        let load = match std::fs::read(&path) {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => Some(Err(e.to_string())),
            Ok(bytes) => Some(match index::decode(&bytes) {
                Ok((k, _)) if k != kind => Err(format!("snapshot holds {k} entries")),
                Ok((_, entries)) => Ok(entries),
                Err(e) => Err(e.to_string()),
            }),
        };
        match load {
            None => IndexLoad::Scanned {
                entries: self.rescan(kind),
            },
            Some(Err(reason)) => IndexLoad::Rebuilt {
                entries: self.rescan(kind),
                reason,
            },
            Some(Ok(entries)) => {
                let total = entries.len();
                let live: HashMap<String, Slot> = entries
                    .into_iter()
                    .filter(|e| e.artifact_path.is_file())
                    .map(Slot::from_entry)
                    .collect();
                let n = live.len();
                *self.shard(kind).write() = live;
                IndexLoad::Loaded {
                    entries: n,
                    dropped: total - n,
                }
            }
        }
    }

    /// Rebuilds the index of `kind` from the artifacts on disk, returning
    /// the number of entries found. Hit counters restart at zero.
    pub fn rescan(&self, kind: VizKind) -> usize {
        let dir = self.root.join(kind.dir_name());
        let mut found = HashMap::new();
        let listing = match std::fs::read_dir(&dir) {
            Ok(l) => l,
            Err(e) => {
                warn!("cannot scan {}: {e}", dir.display());
                *self.shard(kind).write() = found;
                return 0;
            }
        };
        for item in listing.flatten() {
            let path = item.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let key = match std::fs::read_to_string(path.with_extension("key")) {
                Ok(k) => k,
                Err(_) => {
                    warn!("artifact {} has no key file; skipped", path.display());
                    continue;
                }
            };
            if key_digest(&key) != stem || key_kind(&key).ok() != Some(kind) {
                warn!("artifact {} does not match its key file; skipped", path.display());
                continue;
            }
            let Ok(meta) = item.metadata() else { continue };
            let created_at = to_millis(meta.modified().unwrap_or(SystemTime::UNIX_EPOCH).into());
            found.insert(
                key,
                Slot {
                    path,
                    created_at,
                    bytes: meta.len(),
                    hits: AtomicU64::new(0),
                },
            );
        }
        let n = found.len();
        *self.shard(kind).write() = found;
        n
    }

    /// Returns the entry for `key` if it is indexed and its artifact still
    /// exists, counting a hit. Dangling entries are evicted.
    pub fn lookup(&self, key: &str) -> Option<CacheEntry> {
        let kind = key_kind(key).ok()?;
        {
            let shard = self.shard(kind).read();
            let slot = shard.get(key)?;
            if slot.path.is_file() {
                slot.hits.fetch_add(1, Ordering::Relaxed);
                return Some(slot.entry(key));
            }
        }
        self.evict_dangling(kind, key);
        None
    }

    fn evict_dangling(&self, kind: VizKind, key: &str) {
        let mut shard = self.shard(kind).write();
        if shard.get(key).is_some_and(|s| !s.path.is_file()) {
            shard.remove(key);
            debug!("evicted dangling cache entry {key}");
        }
    }

    /// Looks up `key` and reads its artifact.
    pub fn fetch(&self, key: &str) -> Option<(CacheEntry, Vec<u8>)> {
        let entry = self.lookup(key)?;
        match std::fs::read(&entry.artifact_path) {
            Ok(bytes) => Some((entry, bytes)),
            Err(_) => {
                self.evict_dangling(key_kind(key).ok()?, key);
                None
            }
        }
    }

    /// Writes `bytes` as the artifact for `key` (temp file plus rename) and
    /// indexes it, replacing any earlier entry. On error the index is left
    /// unchanged.
    pub fn store(&self, key: &str, bytes: &[u8]) -> Result<CacheEntry, CacheError> {
        let kind = key_kind(key)?;
        let path = self.artifact_path(kind, key);
        write_atomic(&path.with_extension("key"), key.as_bytes())
            .map_err(|e| CacheError::io(&path, e))?;
        write_atomic(&path, bytes).map_err(|e| CacheError::io(&path, e))?;
        let slot = Slot {
            path,
            created_at: to_millis(Utc::now()),
            bytes: bytes.len() as u64,
            hits: AtomicU64::new(0),
        };
        let entry = slot.entry(key);
        {
            let mut shard = self.shard(kind).write();
            shard.insert(key.to_string(), slot);
            if let Some(max) = self.max_entries {
                while shard.len() > max.max(1) {
                    let oldest = shard
                        .iter()
                        .filter(|(k, _)| k.as_str() != key)
                        .min_by(|a, b| a.1.created_at.cmp(&b.1.created_at).then_with(|| a.0.cmp(b.0)))
                        .map(|(k, _)| k.clone());
                    let Some(oldest) = oldest else { break };
                    if let Some(old) = shard.remove(&oldest) {
                        let _ = std::fs::remove_file(&old.path);
                        let _ = std::fs::remove_file(old.path.with_extension("key"));
                    }
                }
            }
        }
        self.persist_kind(kind)?;
        Ok(entry)
    }

    /// Returns the cached payload for `req`, or runs `generator`, stores its
    /// output and returns it. Concurrent calls for the same request share a
    /// single generator run. Generator errors are returned and nothing is
    /// cached.
    pub fn get_or_generate<F, E>(&self, req: &VizRequest, generator: F) -> Result<(Vec<u8>, CacheStatus), CacheError>
    where
        F: FnOnce() -> Result<Vec<u8>, E>,
        E: Into<Box<dyn StdError + Send + Sync>>,
    {
        let key = canonical_key(req)?;
        if let Some((_, bytes)) = self.fetch(&key) {
            return Ok((bytes, CacheStatus::Hit));
        }

        let (flight, leader) = {
            let mut inflight = self.inflight.lock();
            match inflight.get(&key) {
                Some(f) => (f.clone(), false),
                None => {
                    let f = Arc::new(Flight::default());
                    inflight.insert(key.clone(), f.clone());
                    (f, true)
                }
            }
        };
        if !leader {
            let bytes = flight.wait().map_err(CacheError::Generation)?;
            return Ok((bytes.as_ref().clone(), CacheStatus::Miss));
        }

        let guard = FlightGuard {
            cache: self,
            key: &key,
            flight,
            published: false,
        };
        // Another leader may have stored the artifact between our lookup and
        // registering this flight.
        if let Some((_, bytes)) = self.fetch(&key) {
            guard.finish(Ok(Arc::new(bytes.clone())));
            return Ok((bytes, CacheStatus::Hit));
        }
        match generator() {
            Ok(bytes) => {
                if let Err(e) = self.store(&key, &bytes) {
                    warn!("could not materialize {key}: {e}");
                }
                let bytes = Arc::new(bytes);
                guard.finish(Ok(bytes.clone()));
                Ok((Arc::try_unwrap(bytes).unwrap_or_else(|b| b.as_ref().clone()), CacheStatus::Miss))
            }
            Err(e) => {
                let err = GenerationError::from_boxed(e.into());
                guard.finish(Err(err.clone()));
                Err(CacheError::Generation(err))
            }
        }
    }

    /// Live entries of `kind`, sorted by key.
    pub fn entries(&self, kind: VizKind) -> Vec<CacheEntry> {
        let mut out: Vec<CacheEntry> = self
            .shard(kind)
            .read()
            .iter()
            .map(|(k, s)| s.entry(k))
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    pub fn len(&self, kind: VizKind) -> usize {
        self.shard(kind).read().len()
    }

    /// Drops every entry of `kind` together with its artifacts.
    pub fn invalidate(&self, kind: VizKind) -> Result<usize, CacheError> {
        let removed: Vec<Slot> = self.shard(kind).write().drain().map(|(_, s)| s).collect();
        for slot in &removed {
            let _ = std::fs::remove_file(&slot.path);
            let _ = std::fs::remove_file(slot.path.with_extension("key"));
        }
        self.persist_kind(kind)?;
        Ok(removed.len())
    }

    /// Snapshots the index of `kind` to its `.idx` file.
    pub fn persist_kind(&self, kind: VizKind) -> Result<(), CacheError> {
        self.persist_index(kind, &self.index_path(kind))
    }

    /// Snapshots every kind's index.
    pub fn persist(&self) -> Result<(), CacheError> {
        VizKind::ALL.into_iter().try_for_each(|k| self.persist_kind(k))
    }

    /// Writes the index of `kind` to `path`.
    pub fn persist_index(&self, kind: VizKind, path: &Path) -> Result<(), CacheError> {
        let _serial = self.persist_lock.lock();
        let bytes = index::encode(kind, &self.entries(kind));
        write_atomic(path, &bytes).map_err(|e| CacheError::io(path, e))
    }
}

impl Drop for VizCache {
    fn drop(&mut self) {
        if let Err(e) = self.persist() {
            warn!("could not persist cache index on close: {e}");
        }
    }
}

/// Reads an index snapshot written by [`VizCache::persist_index`].
pub fn load_index(path: &Path) -> Result<(VizKind, Vec<CacheEntry>), CacheError> {
    let bytes = std::fs::read(path).map_err(|e| CacheError::io(path, e))?;
    index::decode(&bytes).map_err(|e: SnapshotError| CacheError::Snapshot(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn map_req(feature: &str) -> VizRequest {
        VizRequest::map(
            feature,
            "2020-02-18:2020-02-24".parse().unwrap(),
            "2020-03-20:2020-03-26".parse().unwrap(),
        )
        .unwrap()
    }

    fn key(feature: &str) -> String {
        canonical_key(&map_req(feature)).unwrap()
    }

    #[test]
    fn store_then_lookup_counts_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        assert!(cache.lookup(&key("a")).is_none());
        let stored = cache.store(&key("a"), b"payload").unwrap();
        assert_eq!(stored.hits, 0);
        let hit = cache.lookup(&key("a")).unwrap();
        assert_eq!(hit.hits, 1);
        assert_eq!(std::fs::read(&hit.artifact_path).unwrap(), b"payload");
        assert_eq!(
            hit.artifact_path,
            dir.path().join("map").join(format!("{}.json", key_digest(&key("a"))))
        );
    }

    #[test]
    fn second_store_wins() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        cache.store(&key("a"), b"one").unwrap();
        cache.store(&key("a"), b"two").unwrap();
        assert_eq!(cache.fetch(&key("a")).unwrap().1, b"two");
        assert_eq!(cache.len(VizKind::Map), 1);
    }

    #[test]
    fn deleted_artifact_is_a_miss_and_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        let e = cache.store(&key("a"), b"x").unwrap();
        std::fs::remove_file(&e.artifact_path).unwrap();
        assert!(cache.lookup(&key("a")).is_none());
        assert_eq!(cache.len(VizKind::Map), 0);
    }

    #[test]
    fn unwritable_store_leaves_index_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        // Replace the kind directory with a plain file so writes fail even
        // when running as root.
        let kind_dir = dir.path().join("map");
        std::fs::remove_dir_all(&kind_dir).unwrap();
        std::fs::write(&kind_dir, b"").unwrap();
        assert!(cache.store(&key("a"), b"x").is_err());
        assert!(cache.lookup(&key("a")).is_none());
        assert_eq!(cache.len(VizKind::Map), 0);
    }

    #[test]
    fn miss_then_hit_and_errors_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        let req = map_req("a");
        let err = cache
            .get_or_generate(&req, || Err::<Vec<u8>, _>("boom"))
            .unwrap_err();
        assert!(err.to_string().contains("boom"));
        let (bytes, status) = cache.get_or_generate(&req, || Ok::<_, String>(b"v1".to_vec())).unwrap();
        assert_eq!((bytes.as_slice(), status), (&b"v1"[..], CacheStatus::Miss));
        let (bytes, status) = cache
            .get_or_generate(&req, || -> Result<Vec<u8>, String> { panic!("must not run") })
            .unwrap();
        assert_eq!((bytes.as_slice(), status), (&b"v1"[..], CacheStatus::Hit));
    }

    #[test]
    fn concurrent_misses_generate_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        let calls = AtomicUsize::new(0);
        let barrier = std::sync::Barrier::new(16);
        let req = map_req("a");
        let results: Vec<Vec<u8>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|_| {
                    s.spawn(|| {
                        barrier.wait();
                        cache
                            .get_or_generate(&req, || {
                                calls.fetch_add(1, Ordering::SeqCst);
                                std::thread::sleep(std::time::Duration::from_millis(100));
                                Ok::<_, String>(b"shared".to_vec())
                            })
                            .unwrap()
                            .0
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(results.iter().all(|r| r == b"shared"));
    }

    #[test]
    fn panicking_generator_releases_waiters() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        let req = map_req("a");
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            cache.get_or_generate(&req, || -> Result<Vec<u8>, String> { panic!("bad") })
        }));
        assert!(r.is_err());
        // The flight marker is gone, so the next caller generates again.
        let (bytes, _) = cache.get_or_generate(&req, || Ok::<_, String>(b"ok".to_vec())).unwrap();
        assert_eq!(bytes, b"ok");
    }

    #[test]
    fn reopen_loads_snapshot_and_truncation_rescans() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = VizCache::open(dir.path(), None).unwrap();
            for f in ["a", "b", "c"] {
                cache.store(&key(f), f.as_bytes()).unwrap();
            }
            cache.lookup(&key("a")).unwrap();
            cache.persist().unwrap();
        }
        let cache = VizCache::open(dir.path(), None).unwrap();
        assert_eq!(
            cache.index_loads()[1],
            (VizKind::Map, IndexLoad::Loaded { entries: 3, dropped: 0 })
        );
        assert_eq!(cache.lookup(&key("a")).unwrap().hits, 2);
        drop(cache);

        let idx = dir.path().join("map.idx");
        let bytes = std::fs::read(&idx).unwrap();
        std::fs::write(&idx, &bytes[..bytes.len() / 2]).unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        assert!(matches!(
            cache.index_loads()[1],
            (VizKind::Map, IndexLoad::Rebuilt { entries: 3, .. })
        ));
        assert_eq!(cache.fetch(&key("b")).unwrap().1, b"b");
    }

    #[test]
    fn max_entries_evicts_oldest() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), Some(2)).unwrap();
        cache.store(&key("a"), b"a").unwrap();
        std::thread::sleep(std::time::Duration::from_millis(5));
        cache.store(&key("b"), b"b").unwrap();
        std::thread::sleep(std::time::Duration::from_millis(5));
        cache.store(&key("c"), b"c").unwrap();
        assert_eq!(cache.len(VizKind::Map), 2);
        assert!(cache.lookup(&key("a")).is_none());
    }

    #[test]
    fn invalidate_clears_kind() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VizCache::open(dir.path(), None).unwrap();
        let e = cache.store(&key("a"), b"a").unwrap();
        assert_eq!(cache.invalidate(VizKind::Map).unwrap(), 1);
        assert!(!e.artifact_path.exists());
        assert_eq!(cache.len(VizKind::Map), 0);
        assert!(load_index(&dir.path().join("map.idx")).unwrap().1.is_empty());
    }
}
