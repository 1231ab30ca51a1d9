//! Run export formats.
//!
//! - `jsonl`: the run envelope, one JSON object per line tagged by `type`:
//!   `run`, then `queries`, then one `result` per ranked item (with its
//!   current label), then every `label` event in insertion order.
//! - `csv`: one row per ranked item.
//! - `dataset`: labeled items as training-dataset records.

use std::str::FromStr;

use greylit_core::harness::{records_to_jsonl, DatasetRecord};
use greylit_core::planner::QueryBundle;
use serde::Serialize;

use crate::pipeline::{Service, ServiceError};
use crate::types::{PersistedLabel, ResultEntry, RunRecord, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Jsonl,
    Csv,
    Dataset,
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Jsonl | ExportFormat::Dataset => "application/x-ndjson",
            ExportFormat::Csv => "text/csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(ExportFormat::Jsonl),
            "csv" => Ok(ExportFormat::Csv),
            "dataset" => Ok(ExportFormat::Dataset),
            other => Err(ServiceError::Format(other.to_string())),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Run {
        run: &'a RunRecord,
    },
    Queries {
        bundle: &'a QueryBundle,
    },
    Result {
        #[serde(flatten)]
        entry: &'a ResultEntry,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<&'a PersistedLabel>,
    },
    Label {
        #[serde(flatten)]
        label: &'a PersistedLabel,
    },
}

impl Service {
    pub fn export_run(&self, run_id: &str, format: &str) -> Result<String, ServiceError> {
        let format: ExportFormat = format.parse()?;
        let run = self.get_run(run_id)?;
        let entries = match run.status {
            RunStatus::Complete => self.store().results(run_id).map(|r| r.entries).unwrap_or_default(),
            _ => Vec::new(),
        };
        let current = self.store().current_labels(run_id);
        Ok(match format {
            ExportFormat::Jsonl => {
                let mut out = String::new();
                let mut push = |line: &Line<'_>| {
                    out.push_str(&serde_json::to_string(line).expect("export lines serialize"));
                    out.push('\n');
                };
                push(&Line::Run { run: &run });
                if let Some(bundle) = &run.bundle {
                    push(&Line::Queries { bundle });
                }
                for entry in &entries {
                    push(&Line::Result {
                        entry,
                        label: current.get(&entry.item.item_id),
                    });
                }
                for label in &self.store().label_history(run_id) {
                    push(&Line::Label { label });
                }
                out
            }
            ExportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record([
                    "source",
                    "rank",
                    "item_id",
                    "url",
                    "title",
                    "classifier",
                    "predicted",
                    "probability",
                    "margin",
                    "score",
                    "label",
                    "labeler",
                ])
                .expect("in-memory write");
                for e in &entries {
                    let l = current.get(&e.item.item_id);
                    w.write_record([
                        e.item.source.to_string(),
                        e.rank.to_string(),
                        e.item.item_id.clone(),
                        e.item.url.clone(),
                        e.item.title.clone(),
                        e.prediction.kind.to_string(),
                        e.prediction.label.to_string(),
                        e.prediction.probability.map(|p| p.to_string()).unwrap_or_default(),
                        e.prediction.margin.to_string(),
                        e.score.to_string(),
                        l.map(|l| l.label.to_string()).unwrap_or_default(),
                        l.map(|l| l.labeler.clone()).unwrap_or_default(),
                    ])
                    .expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
            }
            ExportFormat::Dataset => {
                let records: Vec<DatasetRecord> = entries
                    .iter()
                    .filter_map(|e| {
                        current
                            .get(&e.item.item_id)
                            .map(|l| DatasetRecord::from_item(&e.item, &run.intent.id, &run.intent.prompt, l.label))
                    })
                    .collect();
                records_to_jsonl(&records)
            }
        })
    }
}
