//! LLM client contract used by the query planner and the relevance baseline.

use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::connectors::http::{Clock, HttpRequest, Transport};
use crate::connectors::retry::{fetch_with_retry, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("llm request failed: {0}")]
pub struct LlmError(pub String);

/// A chat-completion style model. Implementations may be called from many
/// threads at once and every call must be independent of the others.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

/// OpenAI-compatible `/chat/completions` client.
pub struct OpenAiChat {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
}

/// Environment variable holding the LLM / embedding provider key.
pub const OPENAI_KEY_ENV: &str = "OPENAI_API_KEY";

impl OpenAiChat {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, api_key: String) -> Self {
        OpenAiChat {
            transport,
            clock,
            base_url: "https://api.openai.com/v1".into(),
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into();
        self
    }
}

impl LlmClient for OpenAiChat {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let mut body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = max.into();
        }
        let http = HttpRequest::post_json(format!("{}/chat/completions", self.base_url), &body)
            .header("authorization", format!("Bearer {}", self.api_key));
        let fetched = fetch_with_retry(
            self.transport.as_ref(),
            &http,
            &self.retry,
            self.clock.as_ref(),
            &mut rand::rng(),
        )
        .map_err(|e| LlmError(e.to_string()))?;
        let payload: serde_json::Value = serde_json::from_str(&fetched.response.body)
            .map_err(|e| LlmError(format!("bad completion payload: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError("completion payload has no message content".into()))
    }
}

/// One scripted exchange: the first entry whose `user_contains` is a
/// substring of the request's user prompt answers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub user_contains: String,
    pub response: String,
}

/// Fixture LLM replaying canned responses. Unmatched prompts fail like a
/// transport error would.
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    replies: Vec<ScriptedReply>,
    seen: Mutex<Vec<LlmRequest>>,
}

impl ScriptedLlm {
    pub fn new(replies: Vec<ScriptedReply>) -> Self {
        ScriptedLlm {
            replies,
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Answers every prompt with `response`.
    pub fn always(response: impl Into<String>) -> Self {
        Self::new(vec![ScriptedReply {
            user_contains: String::new(),
            response: response.into(),
        }])
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let replies =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(replies))
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.seen.lock().clone()
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        self.seen.lock().push(request.clone());
        self.replies
            .iter()
            .find(|r| request.user.contains(&r.user_contains))
            .map(|r| r.response.clone())
            .ok_or_else(|| LlmError("no scripted reply matches the prompt".into()))
    }
}

/// An LLM that always fails; exercises the planner's fallback path.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnavailableLlm;

impl LlmClient for UnavailableLlm {
    fn complete(&self, _request: &LlmRequest) -> Result<String, LlmError> {
        Err(LlmError("llm unavailable".into()))
    }
}
