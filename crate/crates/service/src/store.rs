//! Append-only persistence.
//!
//! Three record-per-line files live in the store directory: `runs.jsonl`
//! (a full run snapshot per status change), `results.jsonl` (one record
//! per finished run) and `labels.jsonl` (every label ever submitted). Each
//! record is written with a single `write_all` of the complete line. On
//! open, an incomplete trailing record is cut off; a malformed record in
//! the middle of a file is reported as corruption.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::types::{current_label, PersistedLabel, RunRecord, RunResults};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: record {line} is corrupt: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// What `Journal::open` found on disk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recovery {
    pub records: usize,
    /// Bytes of an incomplete trailing record that were cut off.
    pub truncated_bytes: u64,
}

/// Append-only file of JSON lines.
pub struct Journal<T> {
    path: PathBuf,
    file: Mutex<File>,
    _record: PhantomData<fn() -> T>,
}

impl<T: Serialize + DeserializeOwned> Journal<T> {
    pub fn open(path: &Path) -> Result<(Self, Vec<T>, Recovery), StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut records = Vec::new();
        for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let truncated_bytes = (bytes.len() - complete) as u64;
        if truncated_bytes > 0 {
            tracing::warn!(path = %path.display(), truncated_bytes, "discarding incomplete trailing record");
            file.set_len(complete as u64).map_err(io)?;
        }
        let recovery = Recovery {
            records: records.len(),
            truncated_bytes,
        };
        let journal = Journal {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            _record: PhantomData,
        };
        Ok((journal, records, recovery))
    }

    pub fn append(&self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("store records serialize");
        line.push(b'\n');
        let mut f = self.file.lock();
        f.write_all(&line)
            .and_then(|_| f.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

#[derive(Default)]
struct Index {
    runs: BTreeMap<String, RunRecord>,
    results: BTreeMap<String, RunResults>,
    labels: BTreeMap<String, Vec<PersistedLabel>>,
    next_label_seq: u64,
}

/// Runs, results and labels with an in-memory index rebuilt on open.
///
/// Writers append to the file first and update the index afterwards, so
/// readers (which only consult the index) never see a record that is not
/// fully on disk. Appends to one file are serialized.
pub struct Store {
    dir: PathBuf,
    runs: Journal<RunRecord>,
    results: Journal<RunResults>,
    labels: Journal<PersistedLabel>,
    index: RwLock<Index>,
    recovery: [Recovery; 3],
    new_run: Mutex<()>,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (runs, run_records, r0) = Journal::<RunRecord>::open(&dir.join(RUNS_FILE))?;
        let (results, result_records, r1) = Journal::<RunResults>::open(&dir.join(RESULTS_FILE))?;
        let (labels, label_records, r2) = Journal::<PersistedLabel>::open(&dir.join(LABELS_FILE))?;

        let mut index = Index::default();
        for r in run_records {
            index.runs.insert(r.run_id.clone(), r);
        }
        for r in result_records {
            index.results.insert(r.run_id.clone(), r);
        }
        for l in label_records {
            index.next_label_seq = index.next_label_seq.max(l.seq + 1);
            index.labels.entry(l.run_id.clone()).or_default().push(l);
        }
        Ok(Store {
            dir: dir.to_path_buf(),
            runs,
            results,
            labels,
            index: RwLock::new(index),
            recovery: [r0, r1, r2],
            new_run: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Recovery reports for the runs, results and labels files.
    pub fn recovery(&self) -> [Recovery; 3] {
        self.recovery
    }

    /// Persists a new run under the next free id, `run-000001` upwards.
    pub fn insert_new_run(&self, build: impl FnOnce(String) -> RunRecord) -> Result<RunRecord, StoreError> {
        let _guard = self.new_run.lock();
        let id = format!("run-{:06}", self.index.read().runs.len() + 1);
        let run = build(id);
        self.put_run(&run)?;
        Ok(run)
    }

    pub fn put_run(&self, run: &RunRecord) -> Result<(), StoreError> {
        self.runs.append(run)?;
        self.index.write().runs.insert(run.run_id.clone(), run.clone());
        Ok(())
    }

    pub fn run(&self, run_id: &str) -> Option<RunRecord> {
        self.index.read().runs.get(run_id).cloned()
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.index.read().runs.values().cloned().collect()
    }

    pub fn put_results(&self, results: &RunResults) -> Result<(), StoreError> {
        self.results.append(results)?;
        self.index
            .write()
            .results
            .insert(results.run_id.clone(), results.clone());
        Ok(())
    }

    pub fn results(&self, run_id: &str) -> Option<RunResults> {
        self.index.read().results.get(run_id).cloned()
    }

    /// Assigns the next sequence number to `label` and persists it.
    pub fn add_label(&self, mut label: PersistedLabel) -> Result<PersistedLabel, StoreError> {
        let mut index = self.index.write();
        label.seq = index.next_label_seq;
        self.labels.append(&label)?;
        index.next_label_seq += 1;
        index
            .labels
            .entry(label.run_id.clone())
            .or_default()
            .push(label.clone());
        Ok(label)
    }

    /// Every label of a run in insertion order.
    pub fn label_history(&self, run_id: &str) -> Vec<PersistedLabel> {
        self.index.read().labels.get(run_id).cloned().unwrap_or_default()
    }

    /// Current label per item of a run.
    pub fn current_labels(&self, run_id: &str) -> BTreeMap<String, PersistedLabel> {
        let history = self.label_history(run_id);
        let mut by_item: BTreeMap<&str, Vec<&PersistedLabel>> = BTreeMap::new();
        for l in &history {
            by_item.entry(&l.item_id).or_default().push(l);
        }
        by_item
            .into_iter()
            .filter_map(|(item, ls)| current_label(ls).map(|l| (item.to_string(), l.clone())))
            .collect()
    }
}
