//! Labeled dataset files.
//!
//! A dataset is one JSON object per line:
//!
//! ```json
//! {"schema_version":1,"source":"stackoverflow",
//!  "intent":{"id":"intent-1","prompt":"..."},
//!  "item":{"url":"...","title":"...","snippet":"...","extras":{...}},
//!  "label":"relevant"}
//! ```
//!
//! A directory dataset holds any number of `*.jsonl` files, read in name
//! order, and an optional `manifest.json` sidecar with expected counts.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::connectors::dedup::{survivor_indices, DedupKey, DEFAULT_SHINGLE_THRESHOLD};
use crate::connectors::{item_id_for, ExtraValue, FetchProvenance, RetrievedItem};
use crate::par::ExecMode;
use crate::source::{Label, Source};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIntent {
    pub id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub extras: BTreeMap<String, ExtraValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub source: Source,
    pub intent: DatasetIntent,
    pub item: DatasetItem,
    pub label: Label,
}

impl DatasetRecord {
    pub fn from_item(item: &RetrievedItem, intent_id: &str, prompt: &str, label: Label) -> Self {
        DatasetRecord {
            schema_version: DATASET_SCHEMA_VERSION,
            source: item.source,
            intent: DatasetIntent {
                id: intent_id.to_string(),
                prompt: prompt.to_string(),
            },
            item: DatasetItem {
                url: item.url.clone(),
                title: item.title.clone(),
                snippet: item.snippet.clone(),
                extras: item.extras.clone(),
            },
            label,
        }
    }

    /// The record as a retrieved item, with placeholder provenance.
    pub fn to_retrieved(&self) -> RetrievedItem {
        RetrievedItem {
            item_id: item_id_for(self.source, &self.item.url),
            source: self.source,
            url: self.item.url.clone(),
            title: self.item.title.clone(),
            snippet: self.item.snippet.clone(),
            extras: self.item.extras.clone(),
            provenance: FetchProvenance {
                query_id: "dataset".into(),
                request_id: format!("dataset/{}", self.intent.id),
                page_number: 0,
                fetched_at: DateTime::<Utc>::UNIX_EPOCH,
                endpoint: String::new(),
                attempt_count: 0,
            },
        }
    }
}

impl DedupKey for DatasetRecord {
    fn url(&self) -> &str {
        &self.item.url
    }
    fn title(&self) -> &str {
        &self.item.title
    }
    fn snippet(&self) -> &str {
        &self.item.snippet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub relevant: usize,
    pub irrelevant: usize,
}

impl Counts {
    pub fn of<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut c = Counts::default();
        for l in labels {
            c.total += 1;
            if l.is_relevant() {
                c.relevant += 1;
            } else {
                c.irrelevant += 1;
            }
        }
        c
    }

    pub fn is_consistent(&self) -> bool {
        self.relevant + self.irrelevant == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<Counts>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_source: BTreeMap<Source, Counts>,
}

impl Manifest {
    /// Internal arithmetic problems: rows whose parts do not add up, and
    /// per-source rows that do not sum to the total.
    pub fn consistency_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for (s, c) in &self.per_source {
            if !c.is_consistent() {
                errors.push(format!("{s}: {} + {} != {}", c.relevant, c.irrelevant, c.total));
            }
        }
        if let Some(t) = self.total {
            if !t.is_consistent() {
                errors.push(format!("total: {} + {} != {}", t.relevant, t.irrelevant, t.total));
            }
            if !self.per_source.is_empty() {
                let sum = self.per_source.values().fold(Counts::default(), |a, c| Counts {
                    total: a.total + c.total,
                    relevant: a.relevant + c.relevant,
                    irrelevant: a.irrelevant + c.irrelevant,
                });
                if sum != t {
                    errors.push(format!("per-source rows sum to {sum:?}, total row says {t:?}"));
                }
            }
        }
        errors
    }
}

/// The label counts published with the reference dataset. The published
/// total row gives 570 relevant items, but the per-source rows sum to 578
/// (and 578 + 559 = 1137), so the summed value is used here.
pub fn published_manifest() -> Manifest {
    let c = |total, relevant, irrelevant| Counts {
        total,
        relevant,
        irrelevant,
    };
    Manifest {
        total: Some(c(1137, 578, 559)),
        per_source: BTreeMap::from([
            (Source::GithubRepos, c(222, 80, 142)),
            (Source::GithubIssues, c(216, 75, 141)),
            (Source::Stackoverflow, c(390, 269, 121)),
            (Source::Websearch, c(309, 154, 155)),
        ]),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} record {index}: {message}")]
    Parse {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error("manifest mismatch: {0:?}")]
    Manifest(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<DatasetRecord>,
    pub duplicates_removed: usize,
}

impl LabeledDataset {
    pub fn counts(&self) -> Counts {
        Counts::of(self.records.iter().map(|r| &r.label))
    }

    pub fn counts_by_source(&self) -> BTreeMap<Source, Counts> {
        let mut out = BTreeMap::new();
        for s in Source::ALL {
            let c = Counts::of(self.records.iter().filter(|r| r.source == s).map(|r| &r.label));
            if c.total > 0 {
                out.insert(s, c);
            }
        }
        out
    }

    pub fn for_source(&self, source: Source) -> Vec<&DatasetRecord> {
        self.records.iter().filter(|r| r.source == source).collect()
    }

    /// Compares counts against `manifest`; every mismatch is reported.
    pub fn check_manifest(&self, manifest: &Manifest) -> Result<(), DatasetError> {
        let mut errors = Vec::new();
        if let Some(expected) = manifest.total {
            let actual = self.counts();
            if actual != expected {
                errors.push(format!("total: expected {expected:?}, found {actual:?}"));
            }
        }
        let by_source = self.counts_by_source();
        for (s, expected) in &manifest.per_source {
            let actual = by_source.get(s).copied().unwrap_or_default();
            if actual != *expected {
                errors.push(format!("{s}: expected {expected:?}, found {actual:?}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Manifest(errors))
        }
    }
}

pub fn parse_records(text: &str, path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parse_err = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            index,
            message,
        };
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if record.schema_version != DATASET_SCHEMA_VERSION {
            return Err(parse_err(format!(
                "unsupported schema_version {}",
                record.schema_version
            )));
        }
        out.push(record);
    }
    Ok(out)
}

/// Drops near-duplicates within each (source, intent) group, keeping the
/// earliest record, with the connector dedup rule.
pub fn deduplicate_records(records: Vec<DatasetRecord>) -> (Vec<DatasetRecord>, usize) {
    let mut groups: HashMap<(Source, String), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.source, r.intent.id.clone())).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for members in groups.values() {
        let group: Vec<&DatasetRecord> = members.iter().map(|&i| &records[i]).collect();
        for s in survivor_indices(&group, DEFAULT_SHINGLE_THRESHOLD, ExecMode::Sequential) {
            keep[members[s]] = true;
        }
    }
    let before = records.len();
    let kept: Vec<DatasetRecord> = records
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r)
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    serde_json::from_str(&read(path)?).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        index: 0,
        message: e.to_string(),
    })
}

/// Loads a dataset file or directory, deduplicates it, then checks it
/// against `manifest`, or against the directory's sidecar when `manifest`
/// is `None`.
pub fn load_dataset(path: &Path, manifest: Option<&Manifest>) -> Result<LabeledDataset, DatasetError> {
    let mut records = Vec::new();
    let mut sidecar = None;
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for f in files {
            records.extend(parse_records(&read(&f)?, &f)?);
        }
        let m = path.join(MANIFEST_FILE);
        if m.is_file() {
            sidecar = Some(read_manifest(&m)?);
        }
    } else {
        records = parse_records(&read(path)?, path)?;
    }
    let (records, duplicates_removed) = deduplicate_records(records);
    let ds = LabeledDataset {
        records,
        duplicates_removed,
    };
    if let Some(m) = manifest.or(sidecar.as_ref()) {
        ds.check_manifest(m)?;
    }
    Ok(ds)
}

/// Writes records as JSON lines.
pub fn records_to_jsonl(records: &[DatasetRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}
