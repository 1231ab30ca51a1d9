use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::adapters::{AdapterError, SourceAdapter};
use super::http::{Clock, HttpRequest, Transport};
use super::item::{extra, extract_item, ExtraValue, FetchProvenance, RetrievedItem};
use super::retry::{fetch_with_retry, FetchError, Fetched, RetryPolicy};
use crate::planner::StructuredQuery;
use crate::source::{sha256_hex, Source};

pub const DEFAULT_PAGE_LIMIT: u32 = 10;
pub const DEFAULT_HOST_BUDGET: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConnectorError {
    #[error("{origin}: credentials rejected (HTTP {status}) on request {request_id}")]
    Credential {
        origin: Source,
        request_id: String,
        status: u16,
    },
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("{origin}: rate limit exhausted on request {request_id} after {attempts} attempts (retry after {retry_after:?})")]
    RateLimited {
        origin: Source,
        request_id: String,
        attempts: u32,
        retry_after: Option<Duration>,
    },
    #[error("{origin}: HTTP {status} on request {request_id} after {attempts} attempts")]
    Http {
        origin: Source,
        request_id: String,
        status: u16,
        attempts: u32,
    },
    #[error("{origin}: transport failure on request {request_id} after {attempts} attempts: {message}")]
    Transport {
        origin: Source,
        request_id: String,
        attempts: u32,
        message: String,
    },
    #[error("{origin}: malformed payload on request {request_id}: {message}")]
    Payload {
        origin: Source,
        request_id: String,
        message: String,
    },
}

impl ConnectorError {
    fn from_fetch(source: Source, request_id: &str, e: FetchError) -> Self {
        let request_id = request_id.to_string();
        match e {
            FetchError::Credential { status, .. } => ConnectorError::Credential {
                origin: source,
                request_id,
                status,
            },
            FetchError::RateLimited {
                attempts, retry_after, ..
            } => ConnectorError::RateLimited {
                origin: source,
                request_id,
                attempts,
                retry_after,
            },
            FetchError::Status { status, attempts, .. } => ConnectorError::Http {
                origin: source,
                request_id,
                status,
                attempts,
            },
            FetchError::Transport { attempts, message } => ConnectorError::Transport {
                origin: source,
                request_id,
                attempts,
                message,
            },
            FetchError::Policy(p) => ConnectorError::Transport {
                origin: source,
                request_id,
                attempts: 0,
                message: p.to_string(),
            },
        }
    }
}

/// Counting semaphore bounding in-flight requests against one host.
pub struct HostBudget {
    free: Mutex<usize>,
    released: Condvar,
}

impl HostBudget {
    pub fn new(permits: usize) -> Self {
        HostBudget {
            free: Mutex::new(permits.max(1)),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> BudgetPermit<'_> {
        let mut free = self.free.lock();
        while *free == 0 {
            self.released.wait(&mut free);
        }
        *free -= 1;
        BudgetPermit { budget: self }
    }
}

pub struct BudgetPermit<'a> {
    budget: &'a HostBudget,
}

impl Drop for BudgetPermit<'_> {
    fn drop(&mut self) {
        *self.budget.free.lock() += 1;
        self.budget.released.notify_one();
    }
}

/// A configured connection to one source.
pub struct SourceClient {
    adapter: Box<dyn SourceAdapter>,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    budget: Arc<HostBudget>,
    budget_size: usize,
}

impl SourceClient {
    pub fn new(adapter: Box<dyn SourceAdapter>, transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        SourceClient {
            adapter,
            transport,
            clock,
            retry: RetryPolicy::default(),
            budget: Arc::new(HostBudget::new(DEFAULT_HOST_BUDGET)),
            budget_size: DEFAULT_HOST_BUDGET,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_budget(mut self, permits: usize) -> Self {
        self.budget = Arc::new(HostBudget::new(permits));
        self.budget_size = permits.max(1);
        self
    }

    pub fn source(&self) -> Source {
        self.adapter.source()
    }

    fn send(&self, request_id: &str, req: &HttpRequest) -> Result<Fetched, ConnectorError> {
        let _permit = self.budget.acquire();
        // Jitter is seeded per request so replays are reproducible.
        let seed = u64::from_str_radix(&sha256_hex(request_id)[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fetch_with_retry(self.transport.as_ref(), req, &self.retry, self.clock.as_ref(), &mut rng)
            .map_err(|e| ConnectorError::from_fetch(self.source(), request_id, e))
    }
}

/// Fetches pages `1..=page_limit` of `q` (stopping early once the source
/// reports exhaustion) and returns the items in source order, pages
/// concatenated. `query_id` must be unique within the run; request ids are
/// derived from it.
pub fn execute_query(
    client: &SourceClient,
    query_id: &str,
    q: &StructuredQuery,
    page_limit: u32,
    per_page: u32,
) -> Result<Vec<RetrievedItem>, ConnectorError> {
    let source = client.source();
    let per_page = per_page.clamp(1, client.adapter.max_per_page());
    let mut out = Vec::new();
    for page in 1..=page_limit.max(1) {
        let request_id = format!("{query_id}/p{page}");
        let req = client.adapter.build_request(q, page, per_page)?;
        let fetched = client.send(&request_id, &req)?;
        let payload_err = |message: String| ConnectorError::Payload {
            origin: source,
            request_id: request_id.clone(),
            message,
        };
        let body: Value =
            serde_json::from_str(&fetched.response.body).map_err(|e| payload_err(format!("invalid JSON: {e}")))?;
        let parsed = client.adapter.parse_page(&body, page, per_page).map_err(payload_err)?;
        let fetched_at = client.clock.now();
        for raw in parsed.items.iter().filter(|raw| client.adapter.keep(q, raw)) {
            let provenance = FetchProvenance {
                query_id: query_id.to_string(),
                request_id: request_id.clone(),
                page_number: page,
                fetched_at,
                endpoint: client.adapter.endpoint(),
                attempt_count: fetched.attempts,
            };
            out.push(extract_item(source, raw, provenance).map_err(|e| payload_err(e.to_string()))?);
        }
        if parsed.exhausted || parsed.items.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Fetches README text for GitHub repository items that lack it. Failures
/// leave the item unchanged.
pub fn attach_readmes(client: &SourceClient, items: &mut [RetrievedItem]) {
    for item in items.iter_mut().filter(|i| i.source == Source::GithubRepos) {
        if item.extras.contains_key(extra::README_TEXT) {
            continue;
        }
        let Some(req) = client.adapter.readme_request(item) else {
            continue;
        };
        let request_id = format!("{}/readme", item.item_id);
        match client.send(&request_id, &req) {
            Ok(f) if !f.response.body.trim().is_empty() => {
                item.extras
                    .insert(extra::README_TEXT.into(), ExtraValue::Text(f.response.body));
            }
            Ok(_) => {}
            Err(e) => tracing::warn!(item = %item.item_id, error = %e, "readme fetch failed"),
        }
    }
}

/// Clients for every configured source.
#[derive(Default)]
pub struct SourceClients {
    clients: BTreeMap<Source, SourceClient>,
}

impl SourceClients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, client: SourceClient) {
        self.clients.insert(client.source(), client);
    }

    pub fn get(&self, source: Source) -> Option<&SourceClient> {
        self.clients.get(&source)
    }
}

/// One query scheduled for a harvest.
#[derive(Debug, Clone)]
pub struct ScheduledQuery {
    pub query_id: String,
    pub query: StructuredQuery,
}

#[derive(Debug, Clone, Default)]
pub struct HarvestOutcome {
    /// Items of all sources, canonical source order then query order.
    pub items: Vec<RetrievedItem>,
    /// First error per failing source.
    pub errors: BTreeMap<Source, String>,
}

/// Outcome of one scheduled query.
type QueryResult = Result<Vec<RetrievedItem>, ConnectorError>;

/// Runs every scheduled query. Sources proceed concurrently; within a
/// source at most the client's host budget of queries are in flight. The
/// output order does not depend on scheduling.
pub fn harvest(clients: &SourceClients, queries: &[ScheduledQuery], page_limit: u32, per_page: u32) -> HarvestOutcome {
    let mut per_source: BTreeMap<Source, Vec<&ScheduledQuery>> = BTreeMap::new();
    for q in queries {
        per_source.entry(q.query.source).or_default().push(q);
    }

    let results: Vec<(Source, Vec<QueryResult>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = per_source
            .iter()
            .map(|(&source, qs)| {
                scope.spawn(move || {
                    let Some(client) = clients.get(source) else {
                        let err = ConnectorError::Adapter(AdapterError::InvalidQuery(format!(
                            "no client configured for {source}"
                        )));
                        return (source, vec![Err(err)]);
                    };
                    (source, run_source(client, qs, page_limit, per_page))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("source worker panicked"))
            .collect()
    });

    let mut outcome = HarvestOutcome::default();
    for (source, per_query) in results {
        for r in per_query {
            match r {
                Ok(items) => outcome.items.extend(items),
                Err(e) => {
                    outcome.errors.entry(source).or_insert_with(|| e.to_string());
                }
            }
        }
    }
    outcome
}

fn run_source(client: &SourceClient, queries: &[&ScheduledQuery], page_limit: u32, per_page: u32) -> Vec<QueryResult> {
    let slots: Vec<Mutex<Option<QueryResult>>> = queries.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = client.budget_size.min(queries.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sq) = queries.get(i) else { break };
                let r = execute_query(client, &sq.query_id, &sq.query, page_limit, per_page);
                *slots[i].lock() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("every slot filled"))
        .collect()
}
