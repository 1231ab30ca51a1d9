use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use greylit_core::connectors::http::Clock;
use greylit_core::connectors::{
    attach_readmes, deduplicate, harvest, RetrievedItem, ScheduledQuery, SourceClients, DEFAULT_PAGE_LIMIT,
};
use greylit_core::embedding::{build_features, Embedder};
use greylit_core::llm::LlmClient;
use greylit_core::models::{rank_items, Prediction};
use greylit_core::planner::{plan_queries, validate_query, QueryBundle, SearchIntent, SearchOptions};
use greylit_core::{Label, Source};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::registry::ModelRegistry;
use crate::store::{Store, StoreError};
use crate::types::{PersistedLabel, ResultEntry, ResultsView, RunCounts, RunFailure, RunRecord, RunResults, RunStatus};

pub const DEFAULT_PER_PAGE: u32 = 30;
pub const DEFAULT_RESULTS_LIMIT: usize = 50;
pub const MAX_RESULTS_LIMIT: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("unsupported export format '{0}' (supported: jsonl, csv, dataset)")]
    Format(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Everything a run talks to besides the store.
pub struct Environment {
    pub llm: Arc<dyn LlmClient>,
    pub clients: Arc<SourceClients>,
    pub embedder: Arc<Embedder>,
    pub registry: Arc<ModelRegistry>,
    pub clock: Arc<dyn Clock>,
    pub page_limit: u32,
    pub per_page: u32,
}

impl Environment {
    pub fn new(
        llm: Arc<dyn LlmClient>,
        clients: SourceClients,
        embedder: Embedder,
        registry: ModelRegistry,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Environment {
            llm,
            clients: Arc::new(clients),
            embedder: Arc::new(embedder),
            registry: Arc::new(registry),
            clock,
            page_limit: DEFAULT_PAGE_LIMIT,
            per_page: DEFAULT_PER_PAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRun {
    pub prompt: String,
    pub options: SearchOptions,
    /// Stop after planning until the bundle is confirmed with
    /// [`Service::replace_queries`].
    #[serde(default)]
    pub hold_for_review: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsQuery {
    #[serde(default)]
    pub view: ResultsView,
    #[serde(default)]
    pub source: Option<Source>,
    #[serde(default)]
    pub offset: Option<usize>,
    #[serde(default)]
    pub limit: Option<usize>,
}

/// One row of a results page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rank: usize,
    pub source: Source,
    pub item_id: String,
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub score: f64,
    pub prediction: Prediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsPage {
    pub run_id: String,
    pub view: ResultsView,
    /// Rows in the view before pagination.
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub item_id: String,
    pub label: Label,
    #[serde(default = "anonymous")]
    pub labeler: String,
}

fn anonymous() -> String {
    "anonymous".into()
}

pub struct Service {
    env: Environment,
    store: Store,
    busy: Mutex<HashSet<String>>,
}

/// Marks a run as being worked on until dropped.
struct Claim<'a> {
    busy: &'a Mutex<HashSet<String>>,
    run_id: String,
}

impl Drop for Claim<'_> {
    fn drop(&mut self) {
        self.busy.lock().remove(&self.run_id);
    }
}

impl Service {
    /// Wraps an opened store. Runs left mid-pipeline by a previous process
    /// are marked failed; held runs keep waiting for review.
    pub fn new(env: Environment, store: Store) -> Result<Self, ServiceError> {
        let svc = Service {
            env,
            store,
            busy: Mutex::new(HashSet::new()),
        };
        for run in svc.store.runs() {
            if !run.status.is_terminal() && !run.awaiting_review {
                let stage = run.status;
                svc.fail(run, stage, "interrupted before completion".into())?;
            }
        }
        Ok(svc)
    }

    fn claim(&self, run_id: &str) -> Result<Claim<'_>, ServiceError> {
        if !self.busy.lock().insert(run_id.to_string()) {
            return Err(ServiceError::Conflict(format!(
                "run {run_id} is already being processed"
            )));
        }
        Ok(Claim {
            busy: &self.busy,
            run_id: run_id.to_string(),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    /// Validates and persists a new run in status planning.
    pub fn create_run(&self, req: &CreateRun) -> Result<RunRecord, ServiceError> {
        let intent = SearchIntent::new(req.prompt.clone(), self.env.clock.now());
        intent.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        req.options
            .validate()
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let now = self.env.clock.now();
        let run = self.store.insert_new_run(|run_id| RunRecord {
            run_id,
            intent,
            options: req.options.clone(),
            bundle: None,
            status: RunStatus::Planning,
            timestamps: BTreeMap::from([(RunStatus::Planning, now)]),
            counts: RunCounts::default(),
            source_errors: BTreeMap::new(),
            failure: None,
            hold_for_review: req.hold_for_review,
            awaiting_review: false,
        })?;
        tracing::info!(run = %run.run_id, "run created");
        Ok(run)
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunRecord, ServiceError> {
        self.store
            .run(run_id)
            .ok_or_else(|| ServiceError::NotFound(format!("run {run_id}")))
    }

    /// Plans the run and, unless it is held for review, executes it.
    pub fn run_pipeline(&self, run_id: &str) -> Result<RunRecord, ServiceError> {
        let run = self.plan(run_id)?;
        if run.awaiting_review || run.status.is_terminal() {
            return Ok(run);
        }
        self.execute(run_id)
    }

    /// Generates the query bundle. A run that already has one is returned
    /// unchanged.
    pub fn plan(&self, run_id: &str) -> Result<RunRecord, ServiceError> {
        let _claim = self.claim(run_id)?;
        let mut run = self.get_run(run_id)?;
        if run.status != RunStatus::Planning || run.bundle.is_some() {
            return Ok(run);
        }
        match plan_queries(
            &run.intent,
            &run.options,
            self.env.llm.as_ref(),
            self.env.clock.as_ref(),
        ) {
            Ok(bundle) => {
                run.bundle = Some(bundle);
                run.awaiting_review = run.hold_for_review;
                self.store.put_run(&run)?;
                Ok(run)
            }
            Err(e) => self.fail(run, RunStatus::Planning, e.to_string()),
        }
    }

    pub fn get_queries(&self, run_id: &str) -> Result<QueryBundle, ServiceError> {
        self.get_run(run_id)?
            .bundle
            .ok_or_else(|| ServiceError::Conflict(format!("run {run_id} has not been planned yet")))
    }

    /// Replaces the bundle of a run that has not started fetching. The
    /// caller resumes a held run with [`Service::execute`].
    pub fn replace_queries(&self, run_id: &str, bundle: QueryBundle) -> Result<RunRecord, ServiceError> {
        let _claim = self.claim(run_id)?;
        let mut run = self.get_run(run_id)?;
        if run.status != RunStatus::Planning || run.bundle.is_none() {
            return Err(ServiceError::Conflict(format!(
                "queries of run {run_id} can only be replaced between planning and fetching (status {})",
                run.status
            )));
        }
        if bundle.intent_id != run.intent.id {
            return Err(ServiceError::Invalid(format!(
                "bundle belongs to intent {}, run has {}",
                bundle.intent_id, run.intent.id
            )));
        }
        if bundle.queries.is_empty() {
            return Err(ServiceError::Invalid("bundle has no queries".into()));
        }
        for (i, q) in bundle.queries.iter().enumerate() {
            if !run.options.sources.contains(&q.source) {
                return Err(ServiceError::Invalid(format!(
                    "queries[{i}]: source {} was not selected",
                    q.source
                )));
            }
            let report = validate_query(q);
            if !report.is_ok() {
                return Err(ServiceError::Invalid(format!("queries[{i}]: {report}")));
            }
        }
        run.bundle = Some(bundle);
        run.awaiting_review = false;
        self.store.put_run(&run)?;
        Ok(run)
    }

    /// Fetch, de-duplicate, embed, classify and rank. Expects a planned run
    /// that is not awaiting review.
    pub fn execute(&self, run_id: &str) -> Result<RunRecord, ServiceError> {
        let _claim = self.claim(run_id)?;
        let mut run = self.get_run(run_id)?;
        if run.status != RunStatus::Planning || run.awaiting_review {
            return Err(ServiceError::Conflict(format!(
                "run {run_id} is not ready to fetch (status {})",
                run.status
            )));
        }
        let Some(bundle) = run.bundle.clone() else {
            return Err(ServiceError::Conflict(format!("run {run_id} has not been planned yet")));
        };

        self.advance(&mut run, RunStatus::Fetching)?;
        let scheduled: Vec<ScheduledQuery> = bundle
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| ScheduledQuery {
                query_id: format!("{run_id}/q{i:02}"),
                query: q.clone(),
            })
            .collect();
        let outcome = harvest(&self.env.clients, &scheduled, self.env.page_limit, self.env.per_page);
        run.source_errors = outcome.errors;
        run.counts.fetched = outcome.items.len();
        let mut items = deduplicate(&outcome.items);
        run.counts.after_dedup = items.len();
        if let Some(client) = self.env.clients.get(Source::GithubRepos) {
            attach_readmes(client, &mut items);
        }

        self.advance(&mut run, RunStatus::Classifying)?;
        let entries = match self.classify(&mut run, &items) {
            Ok(e) => e,
            Err(cause) => return self.fail(run, RunStatus::Classifying, cause),
        };
        run.counts.predicted_relevant = entries.iter().filter(|e| e.prediction.label.is_relevant()).count();
        self.store.put_results(&RunResults {
            run_id: run.run_id.clone(),
            entries,
        })?;
        self.advance(&mut run, RunStatus::Complete)?;
        tracing::info!(run = %run.run_id, counts = ?run.counts, "run complete");
        Ok(run)
    }

    /// Per source, sequentially: embed, build features, predict with the
    /// registry model, rank. A source without a registered model is
    /// annotated and skipped.
    fn classify(&self, run: &mut RunRecord, items: &[RetrievedItem]) -> Result<Vec<ResultEntry>, String> {
        let model_id = run.options.embedding_model_id.clone();
        let dims = run.options.embedding_dims;
        let mut by_source: BTreeMap<Source, Vec<&RetrievedItem>> = BTreeMap::new();
        for it in items {
            by_source.entry(it.source).or_default().push(it);
        }
        let mut intent_vec = None;
        let mut entries = Vec::new();
        for (source, group) in by_source {
            let Some(registered) = self.env.registry.get(source, &model_id, dims) else {
                run.source_errors
                    .entry(source)
                    .or_insert_with(|| format!("no model registered for ({source}, {model_id}, {dims})"));
                continue;
            };
            let intent = match &intent_vec {
                Some(v) => v,
                None => intent_vec.insert(
                    self.env
                        .embedder
                        .embed_text(&run.intent.prompt, &model_id, dims)
                        .map_err(|e| format!("embedding intent: {e}"))?,
                ),
            };
            let spec = registered.entry.spec;
            let mut predictions = Vec::with_capacity(group.len());
            for it in &group {
                let fields = self
                    .env
                    .embedder
                    .embed_item_fields(it, &model_id, dims)
                    .map_err(|e| format!("embedding {}: {e}", it.item_id))?;
                let x = build_features(intent, &fields, spec).map_err(|e| format!("features {}: {e}", it.item_id))?;
                let p = registered
                    .model
                    .predict(&x)
                    .map_err(|e| format!("predicting {}: {e}", it.item_id))?;
                predictions.push((it.item_id.clone(), p));
            }
            let ranked = rank_items(&predictions).map_err(|e| e.to_string())?;
            let by_id: BTreeMap<&str, &RetrievedItem> = group.iter().map(|it| (it.item_id.as_str(), *it)).collect();
            for r in ranked {
                entries.push(ResultEntry {
                    rank: r.rank,
                    score: r.score,
                    prediction: r.prediction,
                    item: by_id[r.item_id.as_str()].clone(),
                });
            }
        }
        Ok(entries)
    }

    fn advance(&self, run: &mut RunRecord, next: RunStatus) -> Result<(), ServiceError> {
        assert!(
            run.status.can_move_to(next),
            "illegal transition {} -> {next}",
            run.status
        );
        run.status = next;
        run.timestamps.insert(next, self.env.clock.now());
        self.store.put_run(run)?;
        Ok(())
    }

    fn fail(&self, mut run: RunRecord, stage: RunStatus, cause: String) -> Result<RunRecord, ServiceError> {
        tracing::warn!(run = %run.run_id, %stage, %cause, "run failed");
        run.failure = Some(RunFailure { stage, cause });
        run.awaiting_review = false;
        self.advance(&mut run, RunStatus::Failed)?;
        Ok(run)
    }

    pub fn get_results(&self, run_id: &str, q: &ResultsQuery) -> Result<ResultsPage, ServiceError> {
        let run = self.get_run(run_id)?;
        if run.status != RunStatus::Complete {
            return Err(ServiceError::Conflict(format!(
                "run {run_id} is not complete (status {})",
                run.status
            )));
        }
        let results = self.store.results(run_id).map(|r| r.entries).unwrap_or_default();
        let labels = self.store.current_labels(run_id);
        let rows: Vec<ResultRow> = results
            .into_iter()
            .filter(|e| q.view == ResultsView::All || e.prediction.label.is_relevant())
            .filter(|e| q.source.is_none_or(|s| s == e.item.source))
            .map(|e| ResultRow {
                rank: e.rank,
                source: e.item.source,
                label: labels.get(&e.item.item_id).map(|l| l.label),
                item_id: e.item.item_id,
                url: e.item.url,
                title: e.item.title,
                snippet: e.item.snippet,
                score: e.score,
                prediction: e.prediction,
            })
            .collect();
        let offset = q.offset.unwrap_or(0);
        let limit = q.limit.unwrap_or(DEFAULT_RESULTS_LIMIT).min(MAX_RESULTS_LIMIT);
        Ok(ResultsPage {
            run_id: run_id.to_string(),
            view: q.view,
            total: rows.len(),
            offset,
            limit,
            items: rows.into_iter().skip(offset).take(limit).collect(),
        })
    }

    /// Records a label; earlier labels for the item stay in the history.
    pub fn submit_label(&self, run_id: &str, req: &LabelRequest) -> Result<PersistedLabel, ServiceError> {
        self.get_run(run_id)?;
        let known = self
            .store
            .results(run_id)
            .is_some_and(|r| r.entries.iter().any(|e| e.item.item_id == req.item_id));
        if !known {
            return Err(ServiceError::NotFound(format!("item {} in run {run_id}", req.item_id)));
        }
        if req.labeler.trim().is_empty() {
            return Err(ServiceError::Invalid("labeler is empty".into()));
        }
        Ok(self.store.add_label(PersistedLabel {
            run_id: run_id.to_string(),
            item_id: req.item_id.clone(),
            label: req.label,
            labeled_at: self.env.clock.now(),
            labeler: req.labeler.clone(),
            seq: 0,
        })?)
    }
}
