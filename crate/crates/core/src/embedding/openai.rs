use std::sync::Arc;

use crate::connectors::http::{Clock, HttpRequest, Transport};
use crate::connectors::retry::{fetch_with_retry, RetryPolicy};

use super::{EmbeddingProvider, ProviderError};

/// OpenAI-compatible `/embeddings` endpoint.
pub struct OpenAiEmbeddings {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
}

impl OpenAiEmbeddings {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, api_key: String) -> Self {
        OpenAiEmbeddings {
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

impl EmbeddingProvider for OpenAiEmbeddings {
    fn embed(&self, text: &str, model_id: &str, dims: Option<usize>) -> Result<Vec<f64>, ProviderError> {
        let mut body = serde_json::json!({"model": model_id, "input": text});
        if let Some(d) = dims {
            body["dimensions"] = d.into();
        }
        let req = HttpRequest::post_json(format!("{}/embeddings", self.base_url), &body)
            .header("authorization", format!("Bearer {}", self.api_key));
        let fetched = fetch_with_retry(
            self.transport.as_ref(),
            &req,
            &self.retry,
            self.clock.as_ref(),
            &mut rand::rng(),
        )
        .map_err(|e| ProviderError {
            message: e.to_string(),
            request_id: None,
        })?;
        let request_id = fetched.response.header("x-request-id").map(str::to_string);
        let fail = |message: String| ProviderError {
            message,
            request_id: request_id.clone(),
        };
        let payload: serde_json::Value =
            serde_json::from_str(&fetched.response.body).map_err(|e| fail(format!("bad embedding payload: {e}")))?;
        payload["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| fail("embedding payload has no data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| fail("non-numeric embedding component".into())))
            .collect()
    }

    fn supports_dims(&self, model_id: &str) -> bool {
        model_id.starts_with("text-embedding-3")
    }
}
