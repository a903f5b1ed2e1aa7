//! Response cache keyed by (backend id, template or task, canonical request).

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;
use sha2::{Digest, Sha256};

/// Stable digest of a request. `request` is serialized with sorted keys.
pub fn key(backend: &str, kind: &str, request: &Value) -> String {
    let canonical = serde_json::to_string(&serde_json::json!([backend, kind, request]))
        .expect("json values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// In-memory cache with an optional directory for persistence across runs.
/// Every operation holds one lock, so concurrent callers observe a single
/// order of puts and gets.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<String, String>>,
    dir: Option<PathBuf>,
    hits: AtomicUsize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            ..Self::default()
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let mut entries = self.entries.lock().expect("cache lock");
        let found = entries.get(key).cloned().or_else(|| {
            let path = self.dir.as_ref()?.join(format!("{key}.txt"));
            let value = fs::read_to_string(path).ok()?;
            entries.insert(key.to_string(), value.clone());
            Some(value)
        });
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    pub fn put(&self, key: &str, value: &str) {
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(dir) = &self.dir {
            if let Err(e) = fs::write(dir.join(format!("{key}.txt")), value) {
                tracing::warn!(error = %e, "could not persist cache entry");
            }
        }
        entries.insert(key.to_string(), value.to_string());
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
