//! Append-only JSON-lines result store.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Manifest summary for the run that wrote the following records.
    Experiment,
    Ladder,
    LadderPoint,
    Quality,
    Alignment,
    Curve,
}

/// One store line. `volatile` holds run-dependent values (timestamps,
/// timings) and is ignored by the determinism contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: RecordKind,
    pub key: String,
    pub manifest_hash: String,
    pub tool_version: String,
    pub payload: Value,
    #[serde(default)]
    pub volatile: Value,
}

impl StoreRecord {
    pub fn new(kind: RecordKind, key: impl Into<String>, manifest_hash: &str, payload: Value) -> Self {
        StoreRecord {
            kind,
            key: key.into(),
            manifest_hash: manifest_hash.to_string(),
            tool_version: crate::TOOL_VERSION.to_string(),
            payload,
            volatile: Value::Null,
        }
    }

    pub fn with_volatile(mut self, mut volatile: Value) -> Self {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        if let Value::Object(map) = &mut volatile {
            map.insert("timestamp".into(), now.into());
        } else {
            volatile = serde_json::json!({ "timestamp": now });
        }
        self.volatile = volatile;
        self
    }
}

type Index = HashMap<(String, RecordKind, String), usize>;

#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    records: Vec<StoreRecord>,
    /// Latest record for each (hash, kind, key).
    latest: Index,
}

impl Store {
    /// Open or create the store file. An unterminated final line is truncated.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut records = Vec::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut valid_len = 0;
            let mut offset = 0;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            for (i, line) in lines.iter().enumerate() {
                offset += line.len();
                if line.trim().is_empty() {
                    valid_len = offset;
                    continue;
                }
                match serde_json::from_str::<StoreRecord>(line) {
                    Ok(r) if line.ends_with('\n') => {
                        records.push(r);
                        valid_len = offset;
                    }
                    Err(e) if i + 1 < lines.len() => {
                        return Err(Error::Manifest(format!("{} line {}: {e}", path.display(), i + 1)))
                    }
                    _ => log::warn!("dropping unterminated last line of {}", path.display()),
                }
            }
            if valid_len < text.len() {
                let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
                f.set_len(valid_len as u64).map_err(|e| Error::io(path, e))?;
            }
        }
        let mut store = Store { path: path.to_path_buf(), records: Vec::new(), latest: Index::new() };
        for r in records {
            store.index(r);
        }
        Ok(store)
    }

    fn index(&mut self, r: StoreRecord) {
        self.latest.insert((r.manifest_hash.clone(), r.kind, r.key.clone()), self.records.len());
        self.records.push(r);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn get(&self, hash: &str, kind: RecordKind, key: &str) -> Option<&StoreRecord> {
        self.latest.get(&(hash.to_string(), kind, key.to_string())).map(|&i| &self.records[i])
    }

    /// Latest record per key of one kind under one manifest hash, sorted by key.
    pub fn latest_of(&self, hash: &str, kind: RecordKind) -> Vec<&StoreRecord> {
        let mut out: Vec<&StoreRecord> = self
            .latest
            .iter()
            .filter(|((h, k, _), _)| h == hash && *k == kind)
            .map(|(_, &i)| &self.records[i])
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    /// Manifest hash of the most recent record, if any.
    pub fn latest_hash(&self) -> Option<&str> {
        self.records.last().map(|r| r.manifest_hash.as_str())
    }

    /// Append unless the latest record with the same hash, kind and key has an
    /// identical payload. Returns whether a line was written.
    pub fn append(&mut self, record: StoreRecord) -> Result<bool> {
        if self.get(&record.manifest_hash, record.kind, &record.key).is_some_and(|r| r.payload == record.payload) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.index(record);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn append_is_idempotent_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s/store.jsonl");
        let mut s = Store::open(&path).unwrap();
        let r = StoreRecord::new(RecordKind::Quality, "a", "h1", json!({"x": 1}));
        assert!(s.append(r.clone().with_volatile(json!({}))).unwrap());
        assert!(!s.append(r.clone()).unwrap());
        assert!(s.append(StoreRecord::new(RecordKind::Quality, "a", "h2", json!({"x": 1}))).unwrap());
        assert!(s.append(StoreRecord::new(RecordKind::Quality, "a", "h1", json!({"x": 2}))).unwrap());

        let s = Store::open(&path).unwrap();
        assert_eq!(s.records().len(), 3);
        assert_eq!(s.get("h1", RecordKind::Quality, "a").unwrap().payload, json!({"x": 2}));
        assert_eq!(s.latest_of("h1", RecordKind::Quality).len(), 1);
        assert!(s.get("h1", RecordKind::Curve, "a").is_none());
        assert_eq!(s.latest_hash(), Some("h1"));
    }

    #[test]
    fn torn_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let good = serde_json::to_string(&StoreRecord::new(RecordKind::Curve, "k", "h", json!(1))).unwrap();
        fs::write(&path, format!("{good}\n{{\"kind\":\"cur")).unwrap();
        assert_eq!(Store::open(&path).unwrap().records().len(), 1);
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{good}\n"));
        fs::write(&path, format!("garbage\n{good}\n")).unwrap();
        assert!(Store::open(&path).is_err());
    }
}
