//! Append-only JSONL cache of translation records.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::{TextKind, TranslateError, TranslationRecord};

type Key = (String, TextKind, String);

fn key_of(r: &TranslationRecord) -> Key {
    (r.text_hash.clone(), r.kind, r.model_id.clone())
}

/// Records keyed by (text hash, kind, model). Later lines in the file win.
#[derive(Debug, Default)]
pub struct TranslationCache {
    path: Option<PathBuf>,
    records: RwLock<HashMap<Key, TranslationRecord>>,
    writer: Mutex<Option<File>>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists; new records are appended to it.
    pub fn open(path: &Path) -> Result<Self, TranslateError> {
        let mut records = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TranslationRecord = serde_json::from_str(&line).map_err(|e| {
                    TranslateError::CacheFormat {
                        line: lineno + 1,
                        reason: e.to_string(),
                    }
                })?;
                records.insert(key_of(&rec), rec);
            }
        }
        Ok(TranslationCache {
            path: Some(path.to_path_buf()),
            records: RwLock::new(records),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, text_hash: &str, kind: TextKind, model_id: &str) -> Option<TranslationRecord> {
        self.records
            .read()
            .expect("cache lock")
            .get(&(text_hash.to_string(), kind, model_id.to_string()))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all records, ordered by key for stable iteration.
    pub fn records(&self) -> Vec<TranslationRecord> {
        let guard = self.records.read().expect("cache lock");
        let mut all: Vec<_> = guard.values().cloned().collect();
        all.sort_by_key(key_of);
        all
    }

    /// Persists (when file-backed) and then publishes the record.
    pub fn insert(&self, record: TranslationRecord) -> Result<(), TranslateError> {
        if let Some(path) = &self.path {
            let mut writer = self.writer.lock().expect("cache writer lock");
            if writer.is_none() {
                *writer = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let file = writer.as_mut().expect("writer opened above");
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.records
            .write()
            .expect("cache lock")
            .insert(key_of(&record), record);
        Ok(())
    }
}
