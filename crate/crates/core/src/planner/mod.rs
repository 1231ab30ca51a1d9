//! Query planning: research intent + run options → validated, renderable,
//! exportable platform queries.

mod exchange;
mod plan;
mod render;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::source::{sha256_hex, Source};

pub use exchange::{export_queries, import_queries, ImportError, QUERY_SCHEMA_VERSION};
pub use plan::{distribute, plan_queries, planner_prompt, PlanError, PROMPT_TEMPLATE_VERSION};
pub use render::render_query;
pub use validate::{validate_query, ValidationReport, Violation};

/// Embedding dimensionalities a run may request.
pub const SUPPORTED_DIMS: [usize; 3] = [512, 1024, 1536];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchIntent {
    pub id: String,
    pub prompt: String,
    pub created_at: DateTime<Utc>,
}

impl SearchIntent {
    /// Builds an intent whose id is derived from the prompt and timestamp.
    pub fn new(prompt: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        let prompt = prompt.into();
        let digest = sha256_hex(&format!("{}\u{0}{}", prompt, created_at.to_rfc3339()));
        SearchIntent {
            id: format!("intent-{}", &digest[..12]),
            prompt,
            created_at,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.prompt.trim().is_empty() {
            return Err(PlanError::InvalidIntent("prompt is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn is_ordered(&self) -> bool {
        self.start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub sources: BTreeSet<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<DateRange>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub languages: BTreeSet<String>,
    pub query_count: usize,
    pub llm_model_id: String,
    pub llm_temperature: f64,
    pub embedding_model_id: String,
    pub embedding_dims: usize,
}

impl SearchOptions {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::InvalidOptions(msg));
        if self.sources.is_empty() {
            return bad("at least one source must be selected".into());
        }
        if self.query_count < self.sources.len() {
            return bad(format!(
                "query_count {} is smaller than the number of sources ({})",
                self.query_count,
                self.sources.len()
            ));
        }
        if !(0.0..=2.0).contains(&self.llm_temperature) {
            return bad(format!("llm_temperature {} outside [0, 2]", self.llm_temperature));
        }
        if !SUPPORTED_DIMS.contains(&self.embedding_dims) {
            return bad(format!(
                "embedding_dims {} not one of 512, 1024, 1536",
                self.embedding_dims
            ));
        }
        if let Some(range) = &self.date_range {
            if !range.is_ordered() {
                return bad(format!("date range start {} is after end {}", range.start, range.end));
            }
        }
        if self.languages.iter().any(|l| l.trim().is_empty()) {
            return bad("empty language name".into());
        }
        Ok(())
    }
}

/// Field selectors a query can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldTarget {
    Title,
    Body,
    Description,
    Readme,
}

impl FieldTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldTarget::Title => "title",
            FieldTarget::Body => "body",
            FieldTarget::Description => "description",
            FieldTarget::Readme => "readme",
        }
    }

    /// Selectors meaningful for `source`.
    pub fn allowed_for(source: Source) -> &'static [FieldTarget] {
        match source {
            Source::GithubRepos => &[FieldTarget::Description, FieldTarget::Readme],
            Source::GithubIssues => &[FieldTarget::Title, FieldTarget::Body],
            Source::Stackoverflow => &[FieldTarget::Title, FieldTarget::Body],
            Source::Websearch => &[],
        }
    }
}

/// Qualifier vocabulary.
pub mod qualifier {
    pub const LANGUAGE: &str = "language";
    pub const CREATED: &str = "created";
    pub const KIND: &str = "kind";
    pub const TAGS: &str = "tags";
    pub const ACCEPTED_ANSWER: &str = "accepted_answer";
    pub const MIN_SCORE: &str = "min_score";
    pub const SITE: &str = "site";
    pub const FILETYPE: &str = "filetype";

    use crate::source::Source;

    pub fn allowed_for(source: Source) -> &'static [&'static str] {
        match source {
            Source::GithubRepos | Source::GithubIssues => &[LANGUAGE, CREATED, KIND],
            Source::Stackoverflow => &[TAGS, ACCEPTED_ANSWER, MIN_SCORE],
            Source::Websearch => &[SITE, FILETYPE],
        }
    }
}

/// A qualifier value. Serialized untagged, so each variant maps to a
/// distinct JSON shape (bool, integer, string, array, object).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QualifierValue {
    Flag(bool),
    Int(i64),
    Text(String),
    List(Vec<String>),
    Range(DateRange),
}

impl QualifierValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            QualifierValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOrigin {
    LlmGenerated,
    TemplateFallback,
    UserEdited,
    Imported,
}

fn imported() -> QueryOrigin {
    QueryOrigin::Imported
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredQuery {
    pub source: Source,
    pub terms: Vec<String>,
    #[serde(default)]
    pub field_targets: BTreeSet<FieldTarget>,
    #[serde(default)]
    pub qualifiers: BTreeMap<String, QualifierValue>,
    #[serde(default = "imported")]
    pub origin: QueryOrigin,
}

impl StructuredQuery {
    pub fn new(source: Source, terms: impl IntoIterator<Item = impl Into<String>>) -> Self {
        StructuredQuery {
            source,
            terms: terms.into_iter().map(Into::into).collect(),
            field_targets: BTreeSet::new(),
            qualifiers: BTreeMap::new(),
            origin: QueryOrigin::UserEdited,
        }
    }

    pub fn target(mut self, t: FieldTarget) -> Self {
        self.field_targets.insert(t);
        self
    }

    pub fn qualifier(mut self, key: &str, value: QualifierValue) -> Self {
        self.qualifiers.insert(key.to_string(), value);
        self
    }

    pub fn with_origin(mut self, origin: QueryOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn qualifier_text(&self, key: &str) -> Option<&str> {
        self.qualifiers.get(key).and_then(QualifierValue::as_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub llm_model_id: String,
    pub llm_temperature: f64,
    pub prompt_template_version: String,
    pub generated_at: DateTime<Utc>,
    /// Why the LLM path was abandoned, when the template fallback engaged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub intent_id: String,
    pub generator: GeneratorInfo,
    pub queries: Vec<StructuredQuery>,
}

impl QueryBundle {
    /// Number of queries per source, in canonical source order.
    pub fn per_source_counts(&self) -> BTreeMap<Source, usize> {
        let mut counts = BTreeMap::new();
        for q in &self.queries {
            *counts.entry(q.source).or_insert(0) += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn options(sources: &[Source], count: usize) -> SearchOptions {
        SearchOptions {
            sources: sources.iter().copied().collect(),
            date_range: None,
            languages: BTreeSet::new(),
            query_count: count,
            llm_model_id: "gpt-4o-mini".into(),
            llm_temperature: 0.2,
            embedding_model_id: "text-embedding-3-small".into(),
            embedding_dims: 512,
        }
    }

    #[test]
    fn options_reject_zero_count_and_no_sources() {
        assert!(matches!(
            options(&[Source::Websearch], 0).validate(),
            Err(PlanError::InvalidOptions(_))
        ));
        assert!(matches!(options(&[], 3).validate(), Err(PlanError::InvalidOptions(_))));
        assert!(options(&[Source::Websearch, Source::GithubRepos], 2).validate().is_ok());
    }

    #[test]
    fn options_check_dims_temperature_and_dates() {
        let mut o = options(&[Source::Websearch], 1);
        o.embedding_dims = 768;
        assert!(o.validate().is_err());
        let mut o = options(&[Source::Websearch], 1);
        o.llm_temperature = 2.5;
        assert!(o.validate().is_err());
        let mut o = options(&[Source::Websearch], 1);
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        o.date_range = Some(DateRange::new(d("2024-01-01"), d("2023-01-01")));
        assert!(o.validate().is_err());
    }

    #[test]
    fn intent_requires_non_blank_prompt() {
        let now = DateTime::from_timestamp(0, 0).unwrap();
        assert!(SearchIntent::new("  \n ", now).validate().is_err());
        let intent = SearchIntent::new("flaky tests", now);
        assert!(intent.validate().is_ok());
        assert_eq!(intent.id, SearchIntent::new("flaky tests", now).id);
    }

    #[test]
    fn qualifier_values_keep_their_shape_in_json() {
        let q = StructuredQuery::new(Source::Stackoverflow, ["x"])
            .qualifier(qualifier::TAGS, QualifierValue::List(vec!["rust".into()]))
            .qualifier(qualifier::MIN_SCORE, QualifierValue::Int(3))
            .qualifier(qualifier::ACCEPTED_ANSWER, QualifierValue::Flag(true));
        let text = serde_json::to_string(&q).unwrap();
        let back: StructuredQuery = serde_json::from_str(&text).unwrap();
        assert_eq!(back, q);
    }
}
