//! Minimal HTTP abstraction shared by the source connectors and the LLM /
//! embedding clients, so every network path can be replayed from a recorded
//! transcript.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Headers that are never written into a transcript.
const SECRET_HEADERS: &[&str] = &["authorization", "x-goog-api-key", "x-api-key", "api-key"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            method: "GET".into(),
            url: url.into(),
            headers: BTreeMap::new(),
            body: None,
        }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        let mut req = HttpRequest {
            method: "POST".into(),
            url: url.into(),
            headers: BTreeMap::new(),
            body: Some(body.to_string()),
        };
        req.headers.insert("content-type".into(), "application/json".into());
        req
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    /// Copy of the request with credential headers removed.
    pub fn redacted(&self) -> HttpRequest {
        let mut req = self.clone();
        req.headers.retain(|k, _| !SECRET_HEADERS.contains(&k.as_str()));
        req
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    /// Lower-cased header names.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        HttpResponse {
            status,
            headers: BTreeMap::new(),
            body: body.into(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Sends one HTTP request. Implementations must be callable from several
/// threads at once; each call is independent.
pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live transport backed by `ureq`. Non-2xx statuses are returned as
/// responses, not errors, so the retry layer can classify them.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        UreqTransport { agent: config.into() }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let err = |e: ureq::Error| TransportError(e.to_string());
        let mut builder = ureq::http::Request::builder()
            .method(request.method.as_str())
            .uri(request.url.as_str());
        for (k, v) in &request.headers {
            builder = builder.header(k.as_str(), v.as_str());
        }
        let http_req = builder
            .body(request.body.clone().unwrap_or_default())
            .map_err(|e| TransportError(e.to_string()))?;
        let mut resp = self.agent.run(http_req).map_err(err)?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.body_mut().read_to_string().map_err(err)?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: HttpRequest,
    pub response: HttpResponse,
}

/// A replayable HTTP transcript.
///
/// Requests are matched on method and URL. Several entries for the same
/// request are served in recorded order; once exhausted the last one keeps
/// being served, which lets a single entry stand for "fails every time".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn push(&mut self, request: HttpRequest, response: HttpResponse) {
        self.entries.push(TranscriptEntry {
            request: request.redacted(),
            response,
        });
    }
}

pub struct ReplayTransport {
    by_key: HashMap<(String, String), Vec<HttpResponse>>,
    cursor: Mutex<HashMap<(String, String), usize>>,
    log: Mutex<Vec<HttpRequest>>,
    sends: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(transcript: Transcript) -> Self {
        let mut by_key: HashMap<(String, String), Vec<HttpResponse>> = HashMap::new();
        for e in transcript.entries {
            by_key
                .entry((e.request.method.to_ascii_uppercase(), e.request.url))
                .or_default()
                .push(e.response);
        }
        ReplayTransport {
            by_key,
            cursor: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            sends: AtomicUsize::new(0),
        }
    }

    /// Every request seen so far, redacted, in arrival order.
    pub fn requests(&self) -> Vec<HttpRequest> {
        self.log.lock().clone()
    }

    pub fn send_count(&self) -> usize {
        self.sends.load(Ordering::SeqCst)
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.sends.fetch_add(1, Ordering::SeqCst);
        self.log.lock().push(request.redacted());
        let key = (request.method.to_ascii_uppercase(), request.url.clone());
        let Some(responses) = self.by_key.get(&key) else {
            return Err(TransportError(format!(
                "no recorded response for {} {}",
                request.method, request.url
            )));
        };
        let mut cursor = self.cursor.lock();
        let idx = cursor.entry(key).or_insert(0);
        let resp = responses[(*idx).min(responses.len() - 1)].clone();
        *idx += 1;
        Ok(resp)
    }
}

/// Time source and sleeper. Injected so retry back-off can be tested
/// without real waiting.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Deterministic clock: `sleep` advances virtual time and records the
/// requested duration.
#[derive(Debug)]
pub struct FakeClock {
    now: Mutex<DateTime<Utc>>,
    sleeps: Mutex<Vec<Duration>>,
    advance_on_sleep: bool,
}

impl FakeClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        FakeClock {
            now: Mutex::new(start),
            sleeps: Mutex::new(Vec::new()),
            advance_on_sleep: true,
        }
    }

    /// A clock whose time never moves, for byte-reproducible fixture runs.
    pub fn frozen(at: DateTime<Utc>) -> Self {
        FakeClock {
            advance_on_sleep: false,
            ..FakeClock::new(at)
        }
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().clone()
    }

    pub fn advance(&self, by: Duration) {
        let mut now = self.now.lock();
        *now += chrono::Duration::from_std(by).expect("duration in range");
    }
}

impl Clock for FakeClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }

    fn sleep(&self, duration: Duration) {
        self.sleeps.lock().push(duration);
        if self.advance_on_sleep {
            self.advance(duration);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_serves_entries_in_order_then_repeats_last() {
        let mut t = Transcript::default();
        t.push(HttpRequest::get("http://x/a"), HttpResponse::new(503, ""));
        t.push(HttpRequest::get("http://x/a"), HttpResponse::new(200, "ok"));
        let replay = ReplayTransport::new(t);
        let req = HttpRequest::get("http://x/a");
        assert_eq!(replay.send(&req).unwrap().status, 503);
        assert_eq!(replay.send(&req).unwrap().status, 200);
        assert_eq!(replay.send(&req).unwrap().status, 200);
        assert!(replay.send(&HttpRequest::get("http://x/b")).is_err());
        assert_eq!(replay.send_count(), 4);
    }

    #[test]
    fn transcripts_never_store_credentials() {
        let mut t = Transcript::default();
        let req = HttpRequest::get("http://x")
            .header("Authorization", "Bearer secret")
            .header("Accept", "json");
        t.push(req, HttpResponse::new(200, ""));
        let text = serde_json::to_string(&t).unwrap();
        assert!(!text.contains("secret"));
        assert!(text.contains("accept"));
    }

    #[test]
    fn fake_clock_records_and_advances() {
        let start = DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc);
        let clock = FakeClock::new(start);
        clock.sleep(Duration::from_millis(1500));
        assert_eq!(clock.sleeps(), vec![Duration::from_millis(1500)]);
        assert_eq!(clock.now(), start + chrono::Duration::milliseconds(1500));
        let frozen = FakeClock::frozen(start);
        frozen.sleep(Duration::from_secs(5));
        assert_eq!(frozen.now(), start);
    }
}
