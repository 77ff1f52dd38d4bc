//! Append-only JSON Lines store of recorded exchanges and the provider that
//! records into or replays from it.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, ChatResponse, Provider, ProviderError, ProviderHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Recorded responses keyed by request digest. A key may carry several
/// responses when the same request was issued more than once; they are
/// replayed in recording order.
pub struct ReplayStore {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, Vec<ChatResponse>>>,
    writer: Mutex<Option<File>>,
}

impl ReplayStore {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads every record from `path`; a missing file yields an empty store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref().to_path_buf();
        let mut entries: HashMap<CacheKey, Vec<ChatResponse>> = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| ProviderError::Store(e.to_string()))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| ProviderError::Store(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| ProviderError::Store(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
                entries.entry(record.key).or_default().push(record.response);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `occurrence`-th recorded response for `key`, or the last one when
    /// fewer were recorded.
    pub fn lookup(&self, key: &CacheKey, occurrence: usize) -> Option<ChatResponse> {
        let entries = self.entries.read().expect("store lock");
        let list = entries.get(key)?;
        list.get(occurrence).or_else(|| list.last()).cloned()
    }

    pub fn append(&self, request: &ChatRequest, response: &ChatResponse) -> Result<(), ProviderError> {
        let record = CacheRecord {
            key: request.cache_key(),
            request: request.clone(),
            response: response.clone(),
        };
        // Appends are serialized by the writer lock so lines never interleave.
        let mut writer = self.writer.lock().expect("writer lock");
        if let Some(path) = &self.path {
            if writer.is_none() {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| ProviderError::Store(e.to_string()))?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| ProviderError::Store(e.to_string()))?;
                *writer = Some(file);
            }
            let mut line = serde_json::to_string(&record).map_err(|e| ProviderError::Store(e.to_string()))?;
            line.push('\n');
            let file = writer.as_mut().expect("opened above");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| ProviderError::Store(e.to_string()))?;
        }
        self.entries
            .write()
            .expect("store lock")
            .entry(record.key)
            .or_default()
            .push(record.response);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Call the inner backend for every request and append the exchange.
    Record,
    /// Serve only from the store; a miss is an error.
    ReplayStrict,
    /// Serve from the store; on a miss call the inner backend and record.
    ReplayFallthrough,
}

/// Wraps a backend with a [`ReplayStore`]. One instance belongs to one run:
/// it tracks how many times each key has been served so repeated identical
/// requests replay in recorded order.
pub struct CachingProvider {
    inner: Option<ProviderHandle>,
    store: Arc<ReplayStore>,
    mode: CacheMode,
    served: Mutex<HashMap<CacheKey, usize>>,
    inner_calls: AtomicU64,
}

impl CachingProvider {
    pub fn new(store: Arc<ReplayStore>, mode: CacheMode, inner: Option<ProviderHandle>) -> Self {
        Self {
            inner,
            store,
            mode,
            served: Mutex::new(HashMap::new()),
            inner_calls: AtomicU64::new(0),
        }
    }

    /// Strict replay with no inner backend at all.
    pub fn replay(store: Arc<ReplayStore>) -> Self {
        Self::new(store, CacheMode::ReplayStrict, None)
    }

    /// Number of requests forwarded to the inner backend.
    pub fn inner_calls(&self) -> u64 {
        self.inner_calls.load(Ordering::Relaxed)
    }

    pub fn store(&self) -> &Arc<ReplayStore> {
        &self.store
    }

    fn forward(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| ProviderError::CacheMiss(request.cache_key()))?;
        self.inner_calls.fetch_add(1, Ordering::Relaxed);
        let response = inner.complete(request)?;
        self.store.append(request, &response)?;
        Ok(response)
    }
}

impl Provider for CachingProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let key = request.cache_key();
        let occurrence = {
            let mut served = self.served.lock().expect("served lock");
            let n = served.entry(key).or_insert(0);
            *n += 1;
            *n - 1
        };
        match self.mode {
            CacheMode::Record => self.forward(request),
            CacheMode::ReplayStrict => self.store.lookup(&key, occurrence).ok_or(ProviderError::CacheMiss(key)),
            CacheMode::ReplayFallthrough => match self.store.lookup(&key, occurrence) {
                Some(response) => Ok(response),
                None => self.forward(request),
            },
        }
    }
}
