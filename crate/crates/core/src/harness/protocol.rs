use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{grid_search, GridSpec};
use super::metrics::{Confusion, Metrics};
use super::split::split_indices;
use super::HarnessError;
use crate::embedding::{build_features, canonical_fields, Embedder, EmbeddingVector, FeatureSpec, FieldEmbeddingSet};
use crate::models::{fit, ClassWeighting, ClassifierKind, FeatureContract, TrainedClassifier};
use crate::par::{self, ExecMode};
use crate::source::{Label, Source};

use super::dataset::DatasetRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedRecord {
    pub intent: EmbeddingVector,
    pub fields: FieldEmbeddingSet,
    pub label: Label,
}

impl EmbeddedRecord {
    /// Both embeddings cut to `dims` and renormalized.
    pub fn truncated(&self, dims: usize) -> Result<Self, HarnessError> {
        let mut fields = FieldEmbeddingSet::new(
            self.fields.item_id.clone(),
            self.fields.source,
            self.fields.model_id.clone(),
            dims,
        );
        for (name, v) in &self.fields.fields {
            fields.insert(name, v.truncated(dims)?)?;
        }
        Ok(EmbeddedRecord {
            intent: self.intent.truncated(dims)?,
            fields,
            label: self.label,
        })
    }
}

/// One source's labeled records embedded with one model, at every
/// dimensionality under study. Record order and labels agree across dims.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    pub source: Source,
    pub embedding_model_id: String,
    pub by_dims: BTreeMap<usize, Vec<EmbeddedRecord>>,
}

impl StudyDataset {
    /// Derives each requested dimensionality from full-length records by
    /// truncation and renormalization.
    pub fn from_full(
        source: Source,
        embedding_model_id: impl Into<String>,
        records: &[EmbeddedRecord],
        dims: &[usize],
    ) -> Result<Self, HarnessError> {
        let mut by_dims = BTreeMap::new();
        for &d in dims {
            let rows: Result<Vec<_>, _> = records.iter().map(|r| r.truncated(d)).collect();
            by_dims.insert(d, rows?);
        }
        Ok(StudyDataset {
            source,
            embedding_model_id: embedding_model_id.into(),
            by_dims,
        })
    }

    pub fn labels(&self) -> Vec<Label> {
        self.by_dims
            .values()
            .next()
            .map(|rows| rows.iter().map(|r| r.label).collect())
            .unwrap_or_default()
    }
}

/// Embeds dataset records of one source at each dimensionality.
pub fn embed_records(
    embedder: &Embedder,
    source: Source,
    records: &[&DatasetRecord],
    model_id: &str,
    dims: &[usize],
    mode: ExecMode,
) -> Result<StudyDataset, HarnessError> {
    let mut by_dims = BTreeMap::new();
    for &d in dims {
        let rows = par::try_map(mode, records, |r| -> Result<EmbeddedRecord, HarnessError> {
            Ok(EmbeddedRecord {
                intent: embedder.embed_text(&r.intent.prompt, model_id, d)?,
                fields: embedder.embed_item_fields(&r.to_retrieved(), model_id, d)?,
                label: r.label,
            })
        })?;
        by_dims.insert(d, rows);
    }
    Ok(StudyDataset {
        source,
        embedding_model_id: model_id.to_string(),
        by_dims,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dims: Vec<usize>,
    pub specs: Vec<FeatureSpec>,
    pub kinds: Vec<ClassifierKind>,
    /// Grids per kind; kinds without an entry use [`GridSpec::default_for`].
    #[serde(default)]
    pub grids: BTreeMap<ClassifierKind, GridSpec>,
    pub seed: u64,
    #[serde(default)]
    pub mode: ExecMode,
}

impl StudyConfig {
    pub fn grid(&self, kind: ClassifierKind) -> GridSpec {
        self.grids
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| GridSpec::default_for(kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: Source,
    pub embedding_model_id: String,
    pub dims: usize,
    pub spec: FeatureSpec,
    pub kind: ClassifierKind,
    pub class_weighting: ClassWeighting,
    pub strength: f64,
    pub cv_balanced_accuracy: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    /// One report per (dataset, dims, spec, kind), in that nesting order.
    pub reports: Vec<EvalReport>,
    /// Models refit on each cell's full training half, parallel to `reports`.
    pub models: Vec<TrainedClassifier>,
    /// Index into `reports` of the selection for each (source, model) pair.
    pub selected: Vec<usize>,
}

struct Cell<'a> {
    dataset: &'a StudyDataset,
    split: &'a (Vec<usize>, Vec<usize>),
    dims: usize,
    spec: FeatureSpec,
    kind: ClassifierKind,
}

impl Cell<'_> {
    fn describe(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.dataset.source, self.dataset.embedding_model_id, self.dims, self.spec, self.kind
        )
    }
}

fn run_cell(cell: &Cell<'_>, config: &StudyConfig) -> Result<(EvalReport, TrainedClassifier), HarnessError> {
    let rows = cell
        .dataset
        .by_dims
        .get(&cell.dims)
        .ok_or_else(|| HarnessError::Grid(format!("dataset has no {}-dim embeddings", cell.dims)))?;
    let features = par::try_map(config.mode, rows, |r| build_features(&r.intent, &r.fields, cell.spec))?;
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let (train, test) = cell.split;
    let x_train: Vec<Vec<f64>> = train.iter().map(|&i| features[i].values.clone()).collect();
    let y_train: Vec<Label> = train.iter().map(|&i| labels[i]).collect();

    let grid = config.grid(cell.kind);
    let search = grid_search(&x_train, &y_train, &grid, config.seed, config.mode)?;
    let field_count = canonical_fields(cell.dataset.source).len();
    let model = fit(&x_train, &y_train, &search.best)?.with_contract(FeatureContract::for_features(
        cell.spec,
        cell.dims,
        field_count,
        Some(cell.dataset.source),
    ))?;
    let mut pred = Vec::with_capacity(test.len());
    for &i in test {
        pred.push(model.predict(&features[i])?.label);
    }
    let truth: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
    let confusion = Confusion::from_labels(&truth, &pred);
    let report = EvalReport {
        source: cell.dataset.source,
        embedding_model_id: cell.dataset.embedding_model_id.clone(),
        dims: cell.dims,
        spec: cell.spec,
        kind: cell.kind,
        class_weighting: search.best.class_weighting,
        strength: search.best.strength,
        cv_balanced_accuracy: search.cv_score,
        metrics: confusion.metrics(),
        confusion,
    };
    Ok((report, model))
}

/// Evaluates every (dataset, dims, spec, kind) cell: 50/50 seeded split,
/// grid search on the training half, refit, test-half metrics. Per
/// (source, embedding model) the report with the highest balanced accuracy
/// is selected, ties going to higher f1 and then to the earlier cell.
pub fn run_study(datasets: &[StudyDataset], config: &StudyConfig) -> Result<StudyResult, HarnessError> {
    let splits: Vec<(Vec<usize>, Vec<usize>)> = datasets
        .iter()
        .map(|d| split_indices(&d.labels(), config.seed))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for (dataset, split) in datasets.iter().zip(&splits) {
        for &dims in &config.dims {
            for &spec in &config.specs {
                for &kind in &config.kinds {
                    cells.push(Cell {
                        dataset,
                        split,
                        dims,
                        spec,
                        kind,
                    });
                }
            }
        }
    }
    let outcomes = par::try_map(config.mode, &cells, |cell| {
        run_cell(cell, config).map_err(|e| HarnessError::Cell {
            config: cell.describe(),
            cause: Box::new(e),
        })
    })?;
    let (reports, models): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();

    let mut selected: Vec<usize> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let slot = selected
            .iter()
            .position(|&j| reports[j].source == r.source && reports[j].embedding_model_id == r.embedding_model_id);
        match slot {
            None => selected.push(i),
            Some(k) => {
                let cur = &reports[selected[k]].metrics;
                let better = r.metrics.balanced_accuracy > cur.balanced_accuracy
                    || (r.metrics.balanced_accuracy == cur.balanced_accuracy && r.metrics.f1 > cur.f1);
                if better {
                    selected[k] = i;
                }
            }
        }
    }
    Ok(StudyResult {
        reports,
        models,
        selected,
    })
}

/// One row per configuration, in report order.
pub fn study_report_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "source",
        "embedding_model",
        "dims",
        "features",
        "classifier",
        "class_weighting",
        "strength",
        "cv_balanced_accuracy",
        "balanced_accuracy",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "tn",
    ])
    .expect("in-memory write");
    for r in reports {
        let c = r.confusion;
        w.write_record([
            r.source.to_string(),
            r.embedding_model_id.clone(),
            r.dims.to_string(),
            r.spec.to_string(),
            r.kind.to_string(),
            r.class_weighting.to_string(),
            r.strength.to_string(),
            format!("{:.4}", r.cv_balanced_accuracy),
            format!("{:.4}", r.metrics.balanced_accuracy),
            format!("{:.4}", r.metrics.precision),
            format!("{:.4}", r.metrics.recall),
            format!("{:.4}", r.metrics.f1),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}
