use std::collections::BTreeMap;
use std::path::Path;

use greylit_core::embedding::{Embedder, FeatureSpec};
use greylit_core::harness::{
    embed_records, run_study, study_report_csv, EvalReport, HarnessError, LabeledDataset, StudyConfig, StudyResult,
};
use greylit_core::models::ClassifierKind;
use greylit_core::par::ExecMode;
use greylit_core::Source;

use crate::registry::{ModelRegistry, RegistryEntry};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSONL: &str = "reports.jsonl";
pub const REGISTRY_DIR: &str = "registry";

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Embedding model ids.
    pub modes: Vec<String>,
    pub dims: Vec<usize>,
    pub specs: Vec<FeatureSpec>,
    pub kinds: Vec<ClassifierKind>,
    pub seed: u64,
    pub exec: ExecMode,
}

pub struct TrainOutcome {
    pub study: StudyResult,
    pub registry: ModelRegistry,
}

/// Embeds every source of `dataset` under every mode, runs the study and
/// registers the best model per (source, mode, dims).
pub fn train(embedder: &Embedder, dataset: &LabeledDataset, opts: &TrainOptions) -> Result<TrainOutcome, HarnessError> {
    let sources: Vec<Source> = dataset.counts_by_source().into_keys().collect();
    let mut studies = Vec::new();
    for &source in &sources {
        let records = dataset.for_source(source);
        for mode in &opts.modes {
            tracing::info!(%source, %mode, records = records.len(), "embedding");
            studies.push(embed_records(embedder, source, &records, mode, &opts.dims, opts.exec)?);
        }
    }
    let config = StudyConfig {
        dims: opts.dims.clone(),
        specs: opts.specs.clone(),
        kinds: opts.kinds.clone(),
        grids: BTreeMap::new(),
        seed: opts.seed,
        mode: opts.exec,
    };
    let study = run_study(&studies, &config)?;
    let registry = registry_from_study(&study).map_err(HarnessError::Grid)?;
    Ok(TrainOutcome { study, registry })
}

fn better(a: &EvalReport, b: &EvalReport) -> bool {
    a.metrics.balanced_accuracy > b.metrics.balanced_accuracy
        || (a.metrics.balanced_accuracy == b.metrics.balanced_accuracy && a.metrics.f1 > b.metrics.f1)
}

/// Best model per (source, mode, dims) under the study's selection rule;
/// the study's own per-(source, mode) pick is flagged `best_overall`.
pub fn registry_from_study(study: &StudyResult) -> Result<ModelRegistry, String> {
    let mut best: BTreeMap<(Source, String, usize), usize> = BTreeMap::new();
    for (i, r) in study.reports.iter().enumerate() {
        let key = (r.source, r.embedding_model_id.clone(), r.dims);
        match best.get(&key) {
            Some(&j) if !better(r, &study.reports[j]) => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    let mut registry = ModelRegistry::empty();
    for i in best.into_values() {
        let r = &study.reports[i];
        let entry = RegistryEntry {
            source: r.source,
            embedding_model_id: r.embedding_model_id.clone(),
            dims: r.dims,
            spec: r.spec,
            kind: r.kind,
            path: String::new(),
            best_overall: study.selected.contains(&i),
            balanced_accuracy: Some(r.metrics.balanced_accuracy),
        };
        registry.insert(entry, study.models[i].clone())?;
    }
    Ok(registry)
}

/// Writes `report.csv`, `reports.jsonl` and the registry under `out`.
pub fn write_outputs(out: &Path, outcome: &TrainOutcome) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(REPORT_CSV), study_report_csv(&outcome.study.reports))?;
    let mut lines = String::new();
    for r in &outcome.study.reports {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    std::fs::write(out.join(REPORT_JSONL), lines)?;
    outcome.registry.save(&out.join(REGISTRY_DIR))?;
    Ok(())
}
