//! Building the run environment: live providers from the process
//! environment, or the recorded fixture set for offline, reproducible runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use greylit_core::connectors::adapters::{
    env as source_env, GenericWebSearch, GithubSearch, GoogleCse, SourceAdapter, StackExchangeSearch,
};
use greylit_core::connectors::http::{
    Clock, FakeClock, ReplayTransport, SystemClock, Transcript, Transport, UreqTransport,
};
use greylit_core::connectors::{SourceClient, SourceClients};
use greylit_core::embedding::{Embedder, EmbeddingCache, HashingEmbeddings, OpenAiEmbeddings};
use greylit_core::llm::{LlmClient, OpenAiChat, ScriptedLlm, UnavailableLlm, OPENAI_KEY_ENV};
use greylit_core::Source;

use crate::pipeline::Environment;
use crate::registry::ModelRegistry;

/// Optional base URL of a generic web search backend; overrides Google.
pub const WEBSEARCH_BASE_URL_ENV: &str = "WEBSEARCH_BASE_URL";

pub const FIXTURE_LLM: &str = "llm.json";
pub const FIXTURE_TRANSCRIPT: &str = "transcript.json";
pub const FIXTURE_REGISTRY: &str = "registry";
pub const FIXTURE_GITHUB: &str = "https://api.github.fixture";
pub const FIXTURE_STACKEXCHANGE: &str = "https://api.stackexchange.fixture/2.3";
pub const FIXTURE_WEBSEARCH: &str = "https://websearch.fixture";
/// Embedding model id the fixture registry is keyed on.
pub const FIXTURE_EMBEDDING_MODEL: &str = "hashing-v1";

/// Instant every fixture run observes.
pub fn fixture_epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-01-15T12:00:00Z")
        .expect("valid timestamp")
        .with_timezone(&Utc)
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct EnvironmentError {
    pub path: PathBuf,
    pub message: String,
}

fn env_error(path: &Path, e: impl std::fmt::Display) -> EnvironmentError {
    EnvironmentError {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// The four adapters pointed at the fixture hosts, without credentials.
pub fn fixture_adapters() -> Vec<Box<dyn SourceAdapter>> {
    vec![
        Box::new(GithubSearch::new(Source::GithubRepos, None).with_base_url(FIXTURE_GITHUB)),
        Box::new(GithubSearch::new(Source::GithubIssues, None).with_base_url(FIXTURE_GITHUB)),
        Box::new(StackExchangeSearch::new(None).with_base_url(FIXTURE_STACKEXCHANGE)),
        Box::new(GenericWebSearch::new(FIXTURE_WEBSEARCH, None)),
    ]
}

/// Source clients over one transport, with fixture base URLs.
pub fn fixture_clients(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> SourceClients {
    let mut clients = SourceClients::new();
    for a in fixture_adapters() {
        clients.insert(SourceClient::new(a, transport.clone(), clock.clone()));
    }
    clients
}

/// Scripted LLM, replayed source traffic, hashing embeddings, the fixture
/// registry and a frozen clock.
pub fn fixture_environment(dir: &Path) -> Result<Environment, EnvironmentError> {
    let llm_path = dir.join(FIXTURE_LLM);
    let llm = ScriptedLlm::load(&llm_path).map_err(|e| env_error(&llm_path, e))?;
    let transcript_path = dir.join(FIXTURE_TRANSCRIPT);
    let transcript = Transcript::load(&transcript_path).map_err(|e| env_error(&transcript_path, e))?;
    let registry_dir = dir.join(FIXTURE_REGISTRY);
    let registry = ModelRegistry::load(&registry_dir).map_err(|e| env_error(&registry_dir, e))?;

    let clock: Arc<dyn Clock> = Arc::new(FakeClock::frozen(fixture_epoch()));
    let transport: Arc<dyn Transport> = Arc::new(ReplayTransport::new(transcript));
    let embedder = Embedder::new(
        Arc::new(HashingEmbeddings::default()),
        Arc::new(EmbeddingCache::in_memory()),
    );
    Ok(Environment::new(
        Arc::new(llm),
        fixture_clients(transport, clock.clone()),
        embedder,
        registry,
        clock,
    ))
}

fn var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

/// Live providers configured from environment variables. Missing source
/// credentials surface later as per-source run errors; a missing provider
/// key disables the LLM (template fallback) and leaves embeddings failing.
pub fn live_environment(models: Option<&Path>, cache: Option<&Path>) -> Result<Environment, EnvironmentError> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let transport: Arc<dyn Transport> = Arc::new(UreqTransport::new(Duration::from_secs(30)));
    let key = var(OPENAI_KEY_ENV);
    if key.is_none() {
        tracing::warn!("{OPENAI_KEY_ENV} is not set; query planning falls back to templates and embedding will fail");
    }

    let llm: Arc<dyn LlmClient> = match &key {
        Some(k) => Arc::new(OpenAiChat::new(transport.clone(), clock.clone(), k.clone())),
        None => Arc::new(UnavailableLlm),
    };
    let provider = OpenAiEmbeddings::new(transport.clone(), clock.clone(), key.unwrap_or_default());
    let cache = match cache {
        Some(p) => EmbeddingCache::open(p).map_err(|e| env_error(p, e))?,
        None => EmbeddingCache::in_memory(),
    };
    let embedder = Embedder::new(Arc::new(provider), Arc::new(cache));

    let registry = match models {
        Some(dir) => ModelRegistry::load(dir).map_err(|e| env_error(dir, e))?,
        None => {
            tracing::warn!("no model registry given; every source will be reported unclassified");
            ModelRegistry::empty()
        }
    };

    let mut clients = SourceClients::new();
    clients.insert(SourceClient::new(
        Box::new(GithubSearch::from_env(Source::GithubRepos)),
        transport.clone(),
        clock.clone(),
    ));
    clients.insert(SourceClient::new(
        Box::new(GithubSearch::from_env(Source::GithubIssues)),
        transport.clone(),
        clock.clone(),
    ));
    clients.insert(SourceClient::new(
        Box::new(StackExchangeSearch::from_env()),
        transport.clone(),
        clock.clone(),
    ));
    let web: Box<dyn SourceAdapter> = match var(WEBSEARCH_BASE_URL_ENV) {
        Some(base) => Box::new(GenericWebSearch::new(base, var(source_env::WEBSEARCH_API_KEY))),
        None => Box::new(GoogleCse::from_env()),
    };
    clients.insert(SourceClient::new(web, transport, clock.clone()));

    Ok(Environment::new(llm, clients, embedder, registry, clock))
}
