//! Content-addressed fixture store: one JSON file per call, keyed by the
//! canonical request hash. Suitable for version control.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::llmclient::{CallRecord, Role, TokenUsage};

#[derive(Clone)]
pub struct ReplayStore {
    root: PathBuf,
    write_lock: Arc<Mutex<()>>,
    /// Monotone counter standing in for wall-clock time, so recorded runs
    /// are byte-reproducible.
    counter: Arc<AtomicU64>,
}

impl ReplayStore {
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(ReplayStore {
            root: root.to_path_buf(),
            write_lock: Arc::new(Mutex::new(())),
            counter: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, call_key: &str) -> PathBuf {
        // two-level fanout keeps directories browsable for large runs
        self.root.join(&call_key[..2]).join(format!("{call_key}.json"))
    }

    pub fn next_timestamp(&self) -> String {
        format!("t{:08}", self.counter.fetch_add(1, Ordering::SeqCst))
    }

    pub fn get(&self, call_key: &str) -> Result<Option<CallRecord>> {
        let path = self.path_for(call_key);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(path.display().to_string(), e)),
        };
        let record: CallRecord = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            detail: e.to_string(),
        })?;
        if record.call_key != call_key {
            return Err(Error::Inconsistent(format!(
                "fixture file {} holds call_key {}",
                path.display(),
                record.call_key
            )));
        }
        Ok(Some(record))
    }

    pub fn put(&self, record: &CallRecord) -> Result<()> {
        let _guard = self.write_lock.lock().expect("store lock poisoned");
        let path = self.path_for(&record.call_key);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        let json = serde_json::to_string_pretty(record).map_err(|e| Error::Parse {
            context: "call record serialization".into(),
            detail: e.to_string(),
        })?;
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    /// Iterate all records (ordering by call_key) for usage accounting.
    pub fn all_records(&self) -> Result<Vec<CallRecord>> {
        let mut keys = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(self.root.display().to_string(), e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(self.root.display().to_string(), e))?;
            if !entry.path().is_dir() {
                continue;
            }
            for file in std::fs::read_dir(entry.path())
                .map_err(|e| Error::io(entry.path().display().to_string(), e))?
            {
                let file = file.map_err(|e| Error::io(entry.path().display().to_string(), e))?;
                if let Some(name) = file.file_name().to_str() {
                    if let Some(key) = name.strip_suffix(".json") {
                        keys.push(key.to_string());
                    }
                }
            }
        }
        keys.sort();
        let mut records = Vec::with_capacity(keys.len());
        for key in keys {
            if let Some(record) = self.get(&key)? {
                records.push(record);
            }
        }
        Ok(records)
    }

    /// Sum usage per role over every persisted record.
    pub fn usage_by_role(&self) -> Result<std::collections::BTreeMap<Role, TokenUsage>> {
        let mut totals = std::collections::BTreeMap::new();
        for record in self.all_records()? {
            totals
                .entry(record.role)
                .or_insert_with(TokenUsage::default)
                .add(&record.usage);
        }
        Ok(totals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::ResponseBody;

    fn record(key: &str, role: Role, input: u64) -> CallRecord {
        CallRecord {
            call_key: key.to_string(),
            role,
            request: serde_json::json!({"user": "x"}),
            response: ResponseBody::Text("y".into()),
            usage: TokenUsage::new(input, 1),
            timestamp: "t0".into(),
        }
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        let rec = record(&"ab".repeat(32), Role::Judge, 10);
        store.put(&rec).unwrap();
        let loaded = store.get(&rec.call_key).unwrap().unwrap();
        assert_eq!(loaded.usage, rec.usage);
        assert_eq!(loaded.response, rec.response);
        assert!(store.get(&"cd".repeat(32)).unwrap().is_none());
    }

    #[test]
    fn usage_sums_by_role() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        store.put(&record(&"aa".repeat(32), Role::Judge, 100)).unwrap();
        store.put(&record(&"bb".repeat(32), Role::Judge, 100)).unwrap();
        store.put(&record(&"cc".repeat(32), Role::Embedder, 7)).unwrap();
        let totals = store.usage_by_role().unwrap();
        assert_eq!(totals[&Role::Judge], TokenUsage { input_tokens: 200, output_tokens: 2, estimated: false });
        assert_eq!(totals[&Role::Embedder].input_tokens, 7);
    }
}
