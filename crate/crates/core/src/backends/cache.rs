use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{BackendError, BackendMode};

/// Collapse runs of whitespace and trim. Applied to search queries before keying.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    /// Digest of `(backend, op, request)`. `serde_json::Value` objects are
    /// sorted maps, so field order in the caller's request never matters.
    pub fn compute(backend: &str, op: &str, request: &Value) -> Self {
        let canonical = serde_json::json!({ "backend": backend, "op": op, "request": request });
        let bytes = serde_json::to_vec(&canonical).expect("json value serializes");
        CacheKey(hex::encode(Sha256::digest(bytes)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub backend: String,
    pub op: String,
    pub request: Value,
    pub value: Value,
    pub recorded_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    key: CacheKey,
    backend: String,
    op: String,
    recorded_at: String,
}

/// Content-addressed response store: `entries/<k[0..2]>/<k>.json` plus an
/// append-only `index.jsonl`.
///
/// Reads touch only the entry file. Writes go through a mutex and land via
/// rename, so a reader sees either no entry or a complete one.
#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    writer: Mutex<()>,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("entries"))?;
        Ok(ResponseCache { root, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.root.join("entries").join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.entry_path(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| BackendError::Decode(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::Cache(e.to_string())),
        }
    }

    pub fn put(
        &self,
        backend: &str,
        op: &str,
        request: &Value,
        value: Value,
        recorded_at: String,
    ) -> Result<CacheEntry, BackendError> {
        let key = CacheKey::compute(backend, op, request);
        let entry = CacheEntry {
            key: key.clone(),
            backend: backend.to_string(),
            op: op.to_string(),
            request: request.clone(),
            value,
            recorded_at,
        };
        let io = |e: std::io::Error| BackendError::Cache(e.to_string());
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.entry_path(&key);
        fs::create_dir_all(path.parent().expect("entry has a parent")).map_err(io)?;
        let tmp = path.with_extension("json.tmp");
        let mut body = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        body.push(b'\n');
        fs::write(&tmp, body).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        let line = IndexLine {
            key,
            backend: entry.backend.clone(),
            op: entry.op.clone(),
            recorded_at: entry.recorded_at.clone(),
        };
        let mut index = OpenOptions::new().create(true).append(true).open(self.root.join("index.jsonl")).map_err(io)?;
        writeln!(index, "{}", serde_json::to_string(&line).expect("index line serializes")).map_err(io)?;
        Ok(entry)
    }

    /// Number of distinct keys listed in the index.
    pub fn len(&self) -> usize {
        let Ok(text) = fs::read_to_string(self.root.join("index.jsonl")) else {
            return 0;
        };
        let mut keys: Vec<_> =
            text.lines().filter_map(|l| serde_json::from_str::<IndexLine>(l).ok()).map(|l| l.key.0).collect();
        keys.sort();
        keys.dedup();
        keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Applies the live/record/replay policy around a live call.
#[derive(Debug, Clone)]
pub struct Recorder {
    mode: BackendMode,
    cache: Option<std::sync::Arc<ResponseCache>>,
}

impl Recorder {
    pub fn new(mode: BackendMode, cache: Option<std::sync::Arc<ResponseCache>>) -> Result<Self, BackendError> {
        if mode != BackendMode::Live && cache.is_none() {
            return Err(BackendError::InvalidRequest(format!("{mode} mode needs a cache root")));
        }
        Ok(Recorder { mode, cache })
    }

    pub fn live() -> Self {
        Recorder { mode: BackendMode::Live, cache: None }
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    /// Returns the response and the time it was obtained (the recording
    /// time when replaying).
    pub fn call<T, F>(&self, backend: &str, op: &str, request: &Value, live: F) -> Result<(T, String), BackendError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, BackendError>,
    {
        match self.mode {
            BackendMode::Replay => {
                let cache = self.cache.as_ref().expect("checked in new");
                let key = CacheKey::compute(backend, op, request);
                let entry = cache.get(&key)?.ok_or_else(|| {
                    log::debug!("replay miss {backend}/{op} {}: {request}", key.0);
                    BackendError::CacheMiss { backend: backend.to_string(), op: op.to_string(), key: key.0.clone() }
                })?;
                let value = serde_json::from_value(entry.value).map_err(|e| BackendError::Decode(e.to_string()))?;
                Ok((value, entry.recorded_at))
            }
            BackendMode::Live => {
                let v = live()?;
                Ok((v, now_rfc3339()))
            }
            BackendMode::Record => {
                let v = live()?;
                let json = serde_json::to_value(&v).map_err(|e| BackendError::Decode(e.to_string()))?;
                let at = now_rfc3339();
                self.cache.as_ref().expect("checked in new").put(backend, op, request, json, at.clone())?;
                Ok((v, at))
            }
        }
    }
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
