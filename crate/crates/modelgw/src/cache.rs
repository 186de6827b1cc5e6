use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::client::QueryRecord;
use crate::{sha256_hex, GatewayError};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Response cache keyed by stimulus id, prompt digest and endpoint
/// fingerprint. One JSON file per entry; writes go through a rename so an
/// interrupted run never leaves a truncated entry behind.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(stimulus_id: &str, prompt_hash: &str, fingerprint: &str) -> String {
        sha256_hex(&[stimulus_id.as_bytes(), prompt_hash.as_bytes(), fingerprint.as_bytes()])
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Unreadable entries are treated as misses.
    pub fn get(&self, stimulus_id: &str, prompt_hash: &str, fingerprint: &str) -> Option<QueryRecord> {
        let bytes = fs::read(self.path(&Self::key(stimulus_id, prompt_hash, fingerprint))).ok()?;
        let record: QueryRecord = serde_json::from_slice(&bytes).ok()?;
        (record.stimulus_id == stimulus_id && record.prompt_hash == prompt_hash && record.fingerprint == fingerprint)
            .then_some(record)
    }

    pub fn put(&self, record: &QueryRecord) -> Result<(), GatewayError> {
        let key = Self::key(&record.stimulus_id, &record.prompt_hash, &record.fingerprint);
        let path = self.path(&key);
        let parent = path.parent().expect("entry has a parent");
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        fs::create_dir_all(parent).map_err(err)?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec(record).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&body).and_then(|_| f.sync_all()).map_err(err)?;
        fs::rename(&tmp, &path).map_err(err)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter(|d| d.path().is_dir())
            .flat_map(|d| fs::read_dir(d.path()).into_iter().flatten().flatten())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
