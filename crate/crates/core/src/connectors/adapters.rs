//! Per-platform request building and page parsing.

use serde_json::{json, Value};
use url::Url;

use super::http::HttpRequest;
use super::item::{extra, RetrievedItem};
use crate::planner::{qualifier, render_query, FieldTarget, QualifierValue, StructuredQuery};
use crate::source::Source;

/// Environment variables holding per-source credentials.
pub mod env {
    pub const GITHUB_TOKEN: &str = "GITHUB_TOKEN";
    pub const STACKEXCHANGE_KEY: &str = "STACKEXCHANGE_KEY";
    pub const GOOGLE_CSE_KEY: &str = "GOOGLE_CSE_KEY";
    pub const GOOGLE_CSE_CX: &str = "GOOGLE_CSE_CX";
    pub const WEBSEARCH_API_KEY: &str = "WEBSEARCH_API_KEY";
}

const USER_AGENT: &str = concat!("greylit/", env!("CARGO_PKG_VERSION"));

/// One page of raw per-item payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub items: Vec<Value>,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("{origin} requires credentials in ${env_var}")]
    MissingCredentials { origin: Source, env_var: &'static str },
    #[error("query cannot be sent: {0}")]
    InvalidQuery(String),
}

pub trait SourceAdapter: Send + Sync {
    fn source(&self) -> Source;

    /// Endpoint template recorded in provenance.
    fn endpoint(&self) -> String;

    /// Largest page size the platform accepts.
    fn max_per_page(&self) -> u32;

    fn build_request(&self, q: &StructuredQuery, page: u32, per_page: u32) -> Result<HttpRequest, AdapterError>;

    fn parse_page(&self, body: &Value, page: u32, per_page: u32) -> Result<Page, String>;

    /// Client-side filter for constraints the API cannot express.
    fn keep(&self, _q: &StructuredQuery, _item: &Value) -> bool {
        true
    }

    /// Follow-up request for an item's README, if the platform has one.
    fn readme_request(&self, _item: &RetrievedItem) -> Option<HttpRequest> {
        None
    }
}

fn with_params(base: &str, params: &[(&str, String)]) -> String {
    let mut url = Url::parse(base).expect("adapter base urls are valid");
    {
        let mut pairs = url.query_pairs_mut();
        for (k, v) in params {
            pairs.append_pair(k, v);
        }
    }
    url.into()
}

fn render(q: &StructuredQuery) -> Result<String, AdapterError> {
    render_query(q).map_err(|r| AdapterError::InvalidQuery(r.to_string()))
}

fn items_of(body: &Value, key: &str) -> Result<Vec<Value>, String> {
    match body.get(key) {
        Some(Value::Array(items)) => Ok(items.clone()),
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(_) => Err(format!("'{key}' is not a list")),
    }
}

/// GitHub REST search (`/search/repositories` or `/search/issues`).
pub struct GithubSearch {
    source: Source,
    base_url: String,
    token: Option<String>,
}

impl GithubSearch {
    /// GitHub only serves the first 1000 results of a search.
    const RESULT_CAP: u64 = 1000;

    pub fn new(source: Source, token: Option<String>) -> Self {
        assert!(source.is_github(), "GithubSearch serves GitHub sources only");
        GithubSearch {
            source,
            base_url: "https://api.github.com".into(),
            token,
        }
    }

    pub fn from_env(source: Source) -> Self {
        Self::new(source, std::env::var(env::GITHUB_TOKEN).ok().filter(|t| !t.is_empty()))
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into();
        self
    }

    fn decorate(&self, req: HttpRequest) -> HttpRequest {
        let req = req.header("user-agent", USER_AGENT);
        match &self.token {
            Some(t) => req.header("authorization", format!("Bearer {t}")),
            None => req,
        }
    }
}

impl SourceAdapter for GithubSearch {
    fn source(&self) -> Source {
        self.source
    }

    fn endpoint(&self) -> String {
        let path = if self.source == Source::GithubRepos {
            "repositories"
        } else {
            "issues"
        };
        format!("{}/search/{path}", self.base_url)
    }

    fn max_per_page(&self) -> u32 {
        100
    }

    fn build_request(&self, q: &StructuredQuery, page: u32, per_page: u32) -> Result<HttpRequest, AdapterError> {
        let mut rendered = render(q)?;
        if self.source == Source::GithubIssues && !rendered.contains("is:issue") {
            rendered.push_str(" is:issue");
        }
        let url = with_params(
            &self.endpoint(),
            &[
                ("q", rendered),
                ("page", page.to_string()),
                ("per_page", per_page.to_string()),
            ],
        );
        Ok(self.decorate(HttpRequest::get(url).header("accept", "application/vnd.github+json")))
    }

    fn parse_page(&self, body: &Value, page: u32, per_page: u32) -> Result<Page, String> {
        let items = items_of(body, "items")?;
        let total = body
            .get("total_count")
            .and_then(Value::as_u64)
            .unwrap_or(0)
            .min(Self::RESULT_CAP);
        let seen = u64::from(page) * u64::from(per_page);
        let exhausted = items.len() < per_page as usize || seen >= total;
        Ok(Page { items, exhausted })
    }

    fn readme_request(&self, item: &RetrievedItem) -> Option<HttpRequest> {
        if self.source != Source::GithubRepos {
            return None;
        }
        let url = Url::parse(&item.url).ok()?;
        let mut segs = url.path_segments()?;
        let (owner, repo) = (segs.next()?, segs.next()?);
        let req = HttpRequest::get(format!("{}/repos/{owner}/{repo}/readme", self.base_url))
            .header("accept", "application/vnd.github.raw+json");
        Some(self.decorate(req))
    }
}

/// Stack Exchange `/search/advanced` on stackoverflow.com.
pub struct StackExchangeSearch {
    base_url: String,
    key: Option<String>,
}

impl StackExchangeSearch {
    pub fn new(key: Option<String>) -> Self {
        StackExchangeSearch {
            base_url: "https://api.stackexchange.com/2.3".into(),
            key,
        }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var(env::STACKEXCHANGE_KEY).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into();
        self
    }
}

impl SourceAdapter for StackExchangeSearch {
    fn source(&self) -> Source {
        Source::Stackoverflow
    }

    fn endpoint(&self) -> String {
        format!("{}/search/advanced", self.base_url)
    }

    fn max_per_page(&self) -> u32 {
        100
    }

    fn build_request(&self, q: &StructuredQuery, page: u32, per_page: u32) -> Result<HttpRequest, AdapterError> {
        render(q)?;
        let terms = q.terms.iter().map(|t| t.trim()).collect::<Vec<_>>().join(" ");
        let mut params = vec![
            ("site", "stackoverflow".to_string()),
            ("order", "desc".to_string()),
            ("sort", "relevance".to_string()),
            ("filter", "withbody".to_string()),
            ("page", page.to_string()),
            ("pagesize", per_page.to_string()),
        ];
        let only: Vec<_> = q.field_targets.iter().collect();
        match only.as_slice() {
            [FieldTarget::Title] => params.push(("title", terms)),
            [FieldTarget::Body] => params.push(("body", terms)),
            _ => params.push(("q", terms)),
        }
        if let Some(QualifierValue::List(tags)) = q.qualifiers.get(qualifier::TAGS) {
            params.push(("tagged", tags.join(";")));
        }
        if let Some(QualifierValue::Flag(true)) = q.qualifiers.get(qualifier::ACCEPTED_ANSWER) {
            params.push(("accepted", "True".into()));
        }
        if let Some(key) = &self.key {
            params.push(("key", key.clone()));
        }
        Ok(HttpRequest::get(with_params(&self.endpoint(), &params)).header("user-agent", USER_AGENT))
    }

    fn parse_page(&self, body: &Value, _page: u32, _per_page: u32) -> Result<Page, String> {
        let items = items_of(body, "items")?;
        let has_more = body.get("has_more").and_then(Value::as_bool).unwrap_or(false);
        Ok(Page {
            exhausted: !has_more || items.is_empty(),
            items,
        })
    }

    fn keep(&self, q: &StructuredQuery, item: &Value) -> bool {
        match q.qualifiers.get(qualifier::MIN_SCORE) {
            Some(QualifierValue::Int(min)) => item
                .get(extra::SCORE)
                .and_then(Value::as_i64)
                .is_some_and(|s| s >= *min),
            _ => true,
        }
    }
}

/// Google Programmable Search (Custom Search JSON API).
pub struct GoogleCse {
    base_url: String,
    key: Option<String>,
    cx: Option<String>,
}

impl GoogleCse {
    pub fn new(key: Option<String>, cx: Option<String>) -> Self {
        GoogleCse {
            base_url: "https://www.googleapis.com/customsearch/v1".into(),
            key,
            cx,
        }
    }

    pub fn from_env() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        Self::new(var(env::GOOGLE_CSE_KEY), var(env::GOOGLE_CSE_CX))
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into();
        self
    }
}

impl SourceAdapter for GoogleCse {
    fn source(&self) -> Source {
        Source::Websearch
    }

    fn endpoint(&self) -> String {
        self.base_url.clone()
    }

    fn max_per_page(&self) -> u32 {
        10
    }

    fn build_request(&self, q: &StructuredQuery, page: u32, per_page: u32) -> Result<HttpRequest, AdapterError> {
        let key = self.key.as_ref().ok_or(AdapterError::MissingCredentials {
            origin: Source::Websearch,
            env_var: env::GOOGLE_CSE_KEY,
        })?;
        let cx = self.cx.as_ref().ok_or(AdapterError::MissingCredentials {
            origin: Source::Websearch,
            env_var: env::GOOGLE_CSE_CX,
        })?;
        let per_page = per_page.min(self.max_per_page());
        let start = (page - 1) * per_page + 1;
        let url = with_params(
            &self.base_url,
            &[
                ("q", render(q)?),
                ("cx", cx.clone()),
                ("start", start.to_string()),
                ("num", per_page.to_string()),
            ],
        );
        Ok(HttpRequest::get(url).header("x-goog-api-key", key.clone()))
    }

    fn parse_page(&self, body: &Value, _page: u32, _per_page: u32) -> Result<Page, String> {
        let items = items_of(body, "items")?
            .into_iter()
            .map(|it| {
                let metatags = &it["pagemap"]["metatags"][0];
                let meta = metatags
                    .get("og:description")
                    .or_else(|| metatags.get("description"))
                    .cloned()
                    .unwrap_or(Value::Null);
                json!({
                    "url": it.get("link").cloned().unwrap_or(Value::Null),
                    "title": it.get("title").cloned().unwrap_or(Value::Null),
                    "snippet": it.get("snippet").cloned().unwrap_or(Value::Null),
                    "meta_description": meta,
                })
            })
            .collect::<Vec<_>>();
        let has_next = body["queries"]["nextPage"].as_array().is_some_and(|a| !a.is_empty());
        Ok(Page {
            exhausted: !has_next || items.is_empty(),
            items,
        })
    }
}

/// Any HTTP search backend honouring the minimal contract
/// `GET {base}/search?q=&page=&per_page=` →
/// `{"items": [{url, title, snippet, meta_description}], "has_more": bool}`.
pub struct GenericWebSearch {
    base_url: String,
    api_key: Option<String>,
}

impl GenericWebSearch {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        GenericWebSearch {
            base_url: base_url.into(),
            api_key,
        }
    }
}

impl SourceAdapter for GenericWebSearch {
    fn source(&self) -> Source {
        Source::Websearch
    }

    fn endpoint(&self) -> String {
        format!("{}/search", self.base_url.trim_end_matches('/'))
    }

    fn max_per_page(&self) -> u32 {
        50
    }

    fn build_request(&self, q: &StructuredQuery, page: u32, per_page: u32) -> Result<HttpRequest, AdapterError> {
        let url = with_params(
            &self.endpoint(),
            &[
                ("q", render(q)?),
                ("page", page.to_string()),
                ("per_page", per_page.to_string()),
            ],
        );
        let req = HttpRequest::get(url);
        Ok(match &self.api_key {
            Some(k) => req.header("authorization", format!("Bearer {k}")),
            None => req,
        })
    }

    fn parse_page(&self, body: &Value, _page: u32, _per_page: u32) -> Result<Page, String> {
        let items = items_of(body, "items")?;
        let has_more = body.get("has_more").and_then(Value::as_bool).unwrap_or(false);
        Ok(Page {
            exhausted: !has_more || items.is_empty(),
            items,
        })
    }
}
