use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dedup::normalize_url;
use crate::source::{normalize_whitespace, sha256_hex, Source};

/// Extras keys per source.
pub mod extra {
    pub const README_TEXT: &str = "readme_text";
    pub const DESCRIPTION: &str = "description";
    pub const STARS: &str = "stars";
    pub const ISSUE_BODY: &str = "issue_body";
    pub const STATE: &str = "state";
    pub const LABELS: &str = "labels";
    pub const QUESTION_BODY: &str = "question_body";
    pub const TAGS: &str = "tags";
    pub const SCORE: &str = "score";
    pub const HAS_ACCEPTED_ANSWER: &str = "has_accepted_answer";
    pub const META_DESCRIPTION: &str = "meta_description";

    use crate::source::Source;

    pub fn declared_for(source: Source) -> &'static [&'static str] {
        match source {
            Source::GithubRepos => &[README_TEXT, DESCRIPTION, STARS],
            Source::GithubIssues => &[ISSUE_BODY, STATE, LABELS],
            Source::Stackoverflow => &[QUESTION_BODY, TAGS, SCORE, HAS_ACCEPTED_ANSWER],
            Source::Websearch => &[META_DESCRIPTION],
        }
    }
}

const SNIPPET_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtraValue {
    Flag(bool),
    Int(i64),
    Text(String),
    List(Vec<String>),
}

impl ExtraValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ExtraValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchProvenance {
    pub query_id: String,
    pub request_id: String,
    pub page_number: u32,
    pub fetched_at: DateTime<Utc>,
    pub endpoint: String,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub item_id: String,
    pub source: Source,
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub extras: BTreeMap<String, ExtraValue>,
    pub provenance: FetchProvenance,
}

impl RetrievedItem {
    pub fn extra_text(&self, key: &str) -> Option<&str> {
        self.extras.get(key).and_then(ExtraValue::as_text)
    }

    /// Text of a named embedding field (`title`, `snippet` or a textual extra).
    pub fn field_text(&self, field: &str) -> Option<&str> {
        let text = match field {
            "title" => Some(self.title.as_str()),
            "snippet" => Some(self.snippet.as_str()),
            other => self.extra_text(other),
        }?;
        (!text.trim().is_empty()).then_some(text)
    }
}

/// Stable item id derived from the source and the normalized URL.
pub fn item_id_for(source: Source, url: &str) -> String {
    format!("{}:{}", source, &sha256_hex(&normalize_url(url))[..16])
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed {origin} item: {message}")]
pub struct ExtractError {
    pub origin: Source,
    pub message: String,
}

/// Maps one per-item payload object to a [`RetrievedItem`].
///
/// Expected platform fields: GitHub repositories `html_url`, `full_name`,
/// `description`, `stargazers_count` (plus `readme`, attached after the
/// README fetch); GitHub issues `html_url`, `title`, `body`, `state`,
/// `labels`; Stack Exchange questions `link`, `title`, `body`, `tags`,
/// `score`, `accepted_answer_id`; web search `url`, `title`, `snippet`,
/// `meta_description`.
pub fn extract_item(
    source: Source,
    payload: &Value,
    provenance: FetchProvenance,
) -> Result<RetrievedItem, ExtractError> {
    let err = |message: String| ExtractError {
        origin: source,
        message,
    };
    let obj = payload
        .as_object()
        .ok_or_else(|| err("payload is not an object".into()))?;

    let url_key = match source {
        Source::GithubRepos | Source::GithubIssues => "html_url",
        Source::Stackoverflow => "link",
        Source::Websearch => "url",
    };
    let url = obj
        .get(url_key)
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| err(format!("missing '{url_key}'")))?
        .trim()
        .to_string();
    url::Url::parse(&url).map_err(|e| err(format!("url '{url}' is not absolute: {e}")))?;

    let title_raw = match source {
        Source::GithubRepos => text(obj.get("full_name")).or_else(|| text(obj.get("name"))),
        _ => text(obj.get("title")),
    };
    let mut title = title_raw.ok_or_else(|| err("missing 'title'".into()))?;
    if source == Source::Stackoverflow {
        title = html_escape::decode_html_entities(&title).into_owned();
    }
    let title = normalize_whitespace(&title);
    if title.is_empty() {
        return Err(err("blank 'title'".into()));
    }

    let mut extras = BTreeMap::new();
    let snippet;
    match source {
        Source::GithubRepos => {
            let description = text(obj.get("description"));
            snippet = description.clone().unwrap_or_default();
            put_text(&mut extras, extra::DESCRIPTION, description);
            put_text(
                &mut extras,
                extra::README_TEXT,
                text(obj.get("readme")).or_else(|| text(obj.get("readme_text"))),
            );
            if let Some(n) = obj.get("stargazers_count").and_then(Value::as_i64) {
                extras.insert(extra::STARS.into(), ExtraValue::Int(n));
            }
        }
        Source::GithubIssues => {
            let body = text(obj.get("body"));
            snippet = excerpt(body.as_deref().unwrap_or_default());
            put_text(&mut extras, extra::ISSUE_BODY, body);
            put_text(&mut extras, extra::STATE, text(obj.get("state")));
            if let Some(labels) = obj.get("labels").and_then(Value::as_array) {
                let names: Vec<String> = labels
                    .iter()
                    .filter_map(|l| l.as_str().or_else(|| l.get("name").and_then(Value::as_str)))
                    .map(str::to_string)
                    .collect();
                extras.insert(extra::LABELS.into(), ExtraValue::List(names));
            }
        }
        Source::Stackoverflow => {
            let body = text(obj.get("body"))
                .map(|b| strip_markup(&b))
                .filter(|b| !b.is_empty());
            snippet = excerpt(body.as_deref().unwrap_or_default());
            put_text(&mut extras, extra::QUESTION_BODY, body);
            if let Some(tags) = obj.get("tags").and_then(Value::as_array) {
                let tags = tags.iter().filter_map(Value::as_str).map(str::to_string).collect();
                extras.insert(extra::TAGS.into(), ExtraValue::List(tags));
            }
            if let Some(n) = obj.get("score").and_then(Value::as_i64) {
                extras.insert(extra::SCORE.into(), ExtraValue::Int(n));
            }
            if obj.get("accepted_answer_id").is_some_and(|v| !v.is_null()) {
                extras.insert(extra::HAS_ACCEPTED_ANSWER.into(), ExtraValue::Flag(true));
            }
        }
        Source::Websearch => {
            snippet = text(obj.get("snippet")).unwrap_or_default();
            put_text(&mut extras, extra::META_DESCRIPTION, text(obj.get("meta_description")));
        }
    }

    Ok(RetrievedItem {
        item_id: item_id_for(source, &url),
        source,
        url,
        title,
        snippet: normalize_whitespace(&snippet),
        extras,
        provenance,
    })
}

fn text(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string)
}

fn put_text(extras: &mut BTreeMap<String, ExtraValue>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        extras.insert(key.to_string(), ExtraValue::Text(v));
    }
}

fn excerpt(body: &str) -> String {
    normalize_whitespace(body).chars().take(SNIPPET_CHARS).collect()
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").expect("valid regex"));

/// Drops HTML tags from an API-supplied body and decodes entities.
fn strip_markup(html: &str) -> String {
    let without_tags = TAG.replace_all(html, " ");
    normalize_whitespace(&html_escape::decode_html_entities(&without_tags))
}
