//! Binary snapshot format for cache indexes.
//!
//! ```text
//! magic      8 bytes  "MLNDIDX\0"
//! version    u8       1
//! kind       u8       0 = TIMELINE, 1 = MAP
//! count      u64
//! count x record:
//!   key_len  u32, key bytes (UTF-8)
//!   path_len u32, path bytes (UTF-8)
//!   created  i64      unix milliseconds
//!   bytes    u64      artifact size
//!   hits     u64
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! All integers are little-endian. Records are sorted by key, so equal
//! indexes encode to equal bytes.

use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use sha2::{Digest, Sha256};

use super::cache::CacheEntry;
use super::request::VizKind;

pub const MAGIC: &[u8; 8] = b"MLNDIDX\0";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("not an index snapshot (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u8),
    #[error("unknown visualization kind tag {0}")]
    Kind(u8),
    #[error("snapshot truncated")]
    Truncated,
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("invalid record: {0}")]
    Record(String),
}

fn kind_tag(kind: VizKind) -> u8 {
    match kind {
        VizKind::Timeline => 0,
        VizKind::Map => 1,
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(kind: VizKind, entries: &[CacheEntry]) -> Vec<u8> {
    let mut sorted: Vec<&CacheEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let mut out = Vec::with_capacity(64 + entries.len() * 160);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind_tag(kind));
    out.extend_from_slice(&(sorted.len() as u64).to_le_bytes());
    for e in sorted {
        put_str(&mut out, &e.key);
        put_str(&mut out, &e.artifact_path.to_string_lossy());
        out.extend_from_slice(&e.created_at.timestamp_millis().to_le_bytes());
        out.extend_from_slice(&e.bytes.to_le_bytes());
        out.extend_from_slice(&e.hits.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.buf.len() < n {
            return Err(SnapshotError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, SnapshotError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, SnapshotError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| SnapshotError::Record("non UTF-8 string".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(VizKind, Vec<CacheEntry>), SnapshotError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(SnapshotError::Magic);
    }
    if bytes.len() < MAGIC.len() + 2 + 8 + 32 {
        return Err(SnapshotError::Truncated);
    }
    let mut r = Reader {
        buf: &bytes[MAGIC.len()..],
    };
    let version = r.u8()?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let kind = match r.u8()? {
        0 => VizKind::Timeline,
        1 => VizKind::Map,
        other => return Err(SnapshotError::Kind(other)),
    };
    let count = r.u64()?;
    // Each record needs at least 32 bytes, which bounds the allocation below.
    if count > (bytes.len() / 32) as u64 {
        return Err(SnapshotError::Truncated);
    }
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let key = r.string()?;
        let path = r.string()?;
        let millis = r.i64()?;
        let size = r.u64()?;
        let hits = r.u64()?;
        let created_at: DateTime<Utc> = Utc
            .timestamp_millis_opt(millis)
            .single()
            .ok_or_else(|| SnapshotError::Record(format!("bad timestamp {millis}")))?;
        entries.push(CacheEntry {
            key,
            artifact_path: PathBuf::from(path),
            created_at,
            bytes: size,
            hits,
        });
    }
    let body_len = bytes.len() - r.buf.len();
    let checksum = r.take(32)?;
    if !r.buf.is_empty() {
        return Err(SnapshotError::Record("trailing bytes".into()));
    }
    if Sha256::digest(&bytes[..body_len]).as_slice() != checksum {
        return Err(SnapshotError::Checksum);
    }
    Ok((kind, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(i: u64) -> CacheEntry {
        CacheEntry {
            key: format!("MAP|feature=f{i}"),
            artifact_path: PathBuf::from(format!("/cache/map/{i:064x}.json")),
            created_at: Utc.timestamp_millis_opt(1_600_000_000_000 + i as i64).unwrap(),
            bytes: i * 17,
            hits: i % 5,
        }
    }

    #[test]
    fn empty_round_trip() {
        let bytes = encode(VizKind::Map, &[]);
        assert_eq!(decode(&bytes).unwrap(), (VizKind::Map, vec![]));
    }

    #[test]
    fn rejects_damage() {
        let entries: Vec<_> = (0..10).map(entry).collect();
        let bytes = encode(VizKind::Timeline, &entries);
        for cut in [0, 5, 12, 30, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0xff;
        assert!(decode(&flipped).is_err());
        let mut version = bytes.clone();
        version[8] = 9;
        assert_eq!(decode(&version), Err(SnapshotError::Version(9)));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(ids in prop::collection::btree_set(0u64..100_000, 0..60), map in any::<bool>()) {
            let kind = if map { VizKind::Map } else { VizKind::Timeline };
            let entries: Vec<CacheEntry> = ids.iter().rev().map(|i| entry(*i)).collect();
            let bytes = encode(kind, &entries);
            let (k, mut back) = decode(&bytes).unwrap();
            prop_assert_eq!(k, kind);
            let mut expected = entries.clone();
            expected.sort_by(|a, b| a.key.cmp(&b.key));
            back.sort_by(|a, b| a.key.cmp(&b.key));
            prop_assert_eq!(&back, &expected);
            prop_assert_eq!(encode(kind, &back), bytes);
        }
    }
}
