//! Embedding cache.
//!
//! On disk the cache is an append-only file of JSON lines: a header line
//! `{"format":"greylit-embedding-cache","version":1}` followed by one
//! record per vector, `{"text_sha256", "model_id", "dims", "values"}`.
//! A torn line (crash mid-write) is skipped on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingVector};

pub const CACHE_FORMAT: &str = "greylit-embedding-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub text_sha256: String,
    pub model_id: String,
    pub dims: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    key: CacheKey,
    values: Vec<f64>,
}

type Slot = Arc<Mutex<Option<EmbeddingVector>>>;

pub struct EmbeddingCache {
    enabled: bool,
    slots: Mutex<HashMap<CacheKey, Slot>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    /// A cache that stores nothing; every lookup computes.
    pub fn disabled() -> Self {
        EmbeddingCache {
            enabled: false,
            slots: Mutex::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    pub fn in_memory() -> Self {
        EmbeddingCache {
            enabled: true,
            ..Self::disabled()
        }
    }

    /// Opens (or creates) a persistent cache file and loads its records.
    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let io = |e: std::io::Error| EmbeddingError::Cache(format!("{}: {e}", path.display()));
        let mut slots = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path).map_err(io)?.len() > 0;
        if exists {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let mut lines = reader.lines();
            let header: Header = lines
                .next()
                .transpose()
                .map_err(io)?
                .and_then(|l| serde_json::from_str(&l).ok())
                .ok_or_else(|| EmbeddingError::Cache("missing cache header".into()))?;
            if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
                return Err(EmbeddingError::Cache(format!(
                    "unsupported cache {} v{}",
                    header.format, header.version
                )));
            }
            for line in lines {
                let line = line.map_err(io)?;
                // Unparseable lines are torn records from an interrupted
                // append; later appends follow them on a fresh line.
                let Ok(rec) = serde_json::from_str::<Record>(&line) else {
                    continue;
                };
                let vector = EmbeddingVector {
                    dims: rec.values.len(),
                    values: rec.values,
                    model_id: rec.key.model_id.clone(),
                    normalized: true,
                };
                slots.insert(rec.key, Arc::new(Mutex::new(Some(vector))));
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if !exists {
            let header = serde_json::to_string(&Header {
                format: CACHE_FORMAT.into(),
                version: CACHE_VERSION,
            })
            .expect("header serializes");
            writeln!(file, "{header}").map_err(io)?;
        } else {
            terminate_torn_tail(path, &mut file).map_err(io)?;
        }
        Ok(EmbeddingCache {
            enabled: true,
            slots: Mutex::new(slots),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().values().filter(|s| s.lock().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached vector for `key` or computes it. Concurrent calls
    /// for the same key wait on one another, so `compute` runs at most once
    /// per key while it keeps succeeding. Failures are not cached.
    pub fn get_or_compute<F>(&self, key: &CacheKey, compute: F) -> Result<EmbeddingVector, EmbeddingError>
    where
        F: FnOnce() -> Result<EmbeddingVector, EmbeddingError>,
    {
        if !self.enabled {
            return compute();
        }
        let slot = self.slots.lock().entry(key.clone()).or_default().clone();
        let mut guard = slot.lock();
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let v = compute()?;
        self.persist(key, &v)?;
        *guard = Some(v.clone());
        Ok(v)
    }

    fn persist(&self, key: &CacheKey, v: &EmbeddingVector) -> Result<(), EmbeddingError> {
        let Some(file) = &self.file else { return Ok(()) };
        let mut line = serde_json::to_string(&Record {
            key: key.clone(),
            values: v.values.clone(),
        })
        .expect("record serializes");
        line.push('\n');
        let mut f = file.lock();
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| EmbeddingError::Cache(e.to_string()))
    }
}

/// Appends a newline if the file does not end with one, so a torn record
/// from an earlier crash is not glued to the next append.
fn terminate_torn_tail(path: &Path, file: &mut File) -> std::io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        file.write_all(b"\n")?;
    }
    Ok(())
}
