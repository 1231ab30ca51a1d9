use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{
    qualifier, validate_query, FieldTarget, GeneratorInfo, QualifierValue, QueryBundle, QueryOrigin, SearchIntent,
    SearchOptions, StructuredQuery,
};
use crate::connectors::http::Clock;
use crate::llm::{LlmClient, LlmRequest};
use crate::source::{normalize_whitespace, Source};

pub const PROMPT_TEMPLATE_VERSION: &str = "query-planner/v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid intent: {0}")]
    InvalidIntent(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Splits `total` across `sources` as evenly as possible; the remainder goes
/// to the earliest sources in canonical order.
pub fn distribute(total: usize, sources: &BTreeSet<Source>) -> Vec<(Source, usize)> {
    if sources.is_empty() {
        return Vec::new();
    }
    let base = total / sources.len();
    let extra = total % sources.len();
    sources
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, base + usize::from(i < extra)))
        .collect()
}

const SYSTEM_PROMPT: &str = "You generate search queries for a grey-literature review in software engineering. \
Answer with JSON only: an object {\"queries\": [...]} where each query is \
{\"source\": one of github_repos|github_issues|stackoverflow|websearch, \
\"terms\": [search phrases], \
\"field_targets\": subset of [title, body, description, readme], \
\"qualifiers\": {...}}. \
Allowed field_targets: github_repos description/readme; github_issues and stackoverflow title/body; websearch none. \
Allowed qualifiers: github_repos and github_issues: language (string), created ({\"start\": \"YYYY-MM-DD\", \"end\": \"YYYY-MM-DD\"}), kind (\"repo\" or \"issue\"); \
stackoverflow: tags (list of strings), accepted_answer (boolean), min_score (non-negative integer); \
websearch: site (host name), filetype (alphanumeric extension). \
For web search, vary the wording with synonyms of the topic.";

/// Builds the LLM request for `intent` under `options`.
pub fn planner_prompt(intent: &SearchIntent, options: &SearchOptions) -> LlmRequest {
    let mut user = format!("Research topic: {}\n", normalize_whitespace(&intent.prompt));
    user.push_str("Queries to generate per source:\n");
    for (source, n) in distribute(options.query_count, &options.sources) {
        user.push_str(&format!("- {source}: {n}\n"));
    }
    if !options.languages.is_empty() {
        let langs: Vec<_> = options.languages.iter().map(String::as_str).collect();
        user.push_str(&format!("Restrict to programming languages: {}\n", langs.join(", ")));
    }
    if let Some(r) = &options.date_range {
        user.push_str(&format!(
            "Restrict to content created between {} and {}\n",
            r.start, r.end
        ));
    }
    LlmRequest {
        model: options.llm_model_id.clone(),
        temperature: options.llm_temperature,
        system: SYSTEM_PROMPT.to_string(),
        user,
        max_tokens: None,
    }
}

/// Plans `options.query_count` queries for `intent`.
///
/// LLM output is salvaged query by query: every parseable, valid query for
/// a selected source is kept up to that source's quota, and any shortfall is
/// filled from the deterministic template. An LLM failure is recorded in the
/// generator record, never returned as an error.
pub fn plan_queries(
    intent: &SearchIntent,
    options: &SearchOptions,
    llm: &dyn LlmClient,
    clock: &dyn Clock,
) -> Result<QueryBundle, PlanError> {
    intent.validate()?;
    options.validate()?;

    let quotas = distribute(options.query_count, &options.sources);
    let request = planner_prompt(intent, options);

    let (candidates, llm_error) = match llm.complete(&request) {
        Ok(text) => match parse_llm_queries(&text) {
            Ok(qs) => (qs, None),
            Err(e) => (Vec::new(), Some(e)),
        },
        Err(e) => (Vec::new(), Some(e.to_string())),
    };

    let mut by_source: BTreeMap<Source, Vec<StructuredQuery>> = BTreeMap::new();
    let mut rejected = 0usize;
    for mut q in candidates {
        if !options.sources.contains(&q.source) {
            rejected += 1;
            continue;
        }
        q.origin = QueryOrigin::LlmGenerated;
        apply_option_constraints(&mut q, options);
        if validate_query(&q).is_ok() {
            by_source.entry(q.source).or_default().push(q);
        } else {
            rejected += 1;
        }
    }

    let mut queries = Vec::with_capacity(options.query_count);
    let mut filled = 0usize;
    for (source, quota) in quotas {
        let mut mine = by_source.remove(&source).unwrap_or_default();
        mine.truncate(quota);
        let have = mine.len();
        queries.extend(mine);
        for variant in have..quota {
            queries.push(template_query(intent, options, source, variant));
            filled += 1;
        }
    }

    let llm_error = llm_error.or_else(|| {
        (filled > 0).then(|| format!("llm output short by {filled} queries ({rejected} rejected); template-filled"))
    });

    Ok(QueryBundle {
        intent_id: intent.id.clone(),
        generator: GeneratorInfo {
            llm_model_id: options.llm_model_id.clone(),
            llm_temperature: options.llm_temperature,
            prompt_template_version: PROMPT_TEMPLATE_VERSION.to_string(),
            generated_at: clock.now(),
            llm_error,
        },
        queries,
    })
}

/// Extracts individually-parseable queries from an LLM answer. Fails only
/// when no JSON list of queries can be located at all.
fn parse_llm_queries(text: &str) -> Result<Vec<StructuredQuery>, String> {
    let json = strip_code_fence(text);
    let value: Value = serde_json::from_str(json).map_err(|e| format!("llm output is not JSON: {e}"))?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("queries") {
            Some(Value::Array(items)) => items,
            _ => return Err("llm output has no 'queries' list".into()),
        },
        _ => return Err("llm output is neither a list nor an object".into()),
    };
    Ok(items
        .into_iter()
        .filter_map(|item| serde_json::from_value::<StructuredQuery>(item).ok())
        .collect())
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

fn apply_option_constraints(q: &mut StructuredQuery, options: &SearchOptions) {
    if q.source.is_github() {
        if let Some(range) = options.date_range {
            q.qualifiers
                .entry(qualifier::CREATED.to_string())
                .or_insert(QualifierValue::Range(range));
        }
        if q.source == Source::GithubIssues {
            q.qualifiers
                .entry(qualifier::KIND.to_string())
                .or_insert_with(|| QualifierValue::Text("issue".into()));
        }
    }
}

/// Deterministic fallback query number `variant` for `source`.
///
/// Terms are the normalized intent prompt; web-search queries additionally
/// carry the selected language names as terms, Stack Overflow queries carry
/// them as tags and GitHub queries rotate through them as `language:`.
fn template_query(intent: &SearchIntent, options: &SearchOptions, source: Source, variant: usize) -> StructuredQuery {
    let langs: Vec<&String> = options.languages.iter().collect();
    let mut q =
        StructuredQuery::new(source, [normalize_whitespace(&intent.prompt)]).with_origin(QueryOrigin::TemplateFallback);
    match source {
        Source::GithubRepos | Source::GithubIssues => {
            let targets = FieldTarget::allowed_for(source);
            q.field_targets.insert(targets[variant % targets.len()]);
            if source == Source::GithubIssues {
                q.qualifiers
                    .insert(qualifier::KIND.into(), QualifierValue::Text("issue".into()));
            }
            if !langs.is_empty() {
                q.qualifiers.insert(
                    qualifier::LANGUAGE.into(),
                    QualifierValue::Text(langs[variant % langs.len()].trim().to_lowercase()),
                );
            }
            if let Some(range) = options.date_range {
                q.qualifiers
                    .insert(qualifier::CREATED.into(), QualifierValue::Range(range));
            }
        }
        Source::Stackoverflow => {
            if variant % 2 == 1 {
                q.field_targets.insert(FieldTarget::Title);
            }
            if !langs.is_empty() {
                let tags = langs
                    .iter()
                    .map(|l| l.trim().to_lowercase().replace(char::is_whitespace, "-"))
                    .collect();
                q.qualifiers.insert(qualifier::TAGS.into(), QualifierValue::List(tags));
            }
        }
        Source::Websearch => {
            q.terms.extend(langs.iter().map(|l| l.trim().to_string()));
        }
    }
    q
}
