use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::Rng;
use reqwest::{Client, StatusCode, Url};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::schema::SCHEMA_NAME;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub structured_output: bool,
    /// First backoff delay; doubles per retry, plus up to the same amount of jitter.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

fn default_max_output_tokens() -> u32 {
    1024
}
fn default_timeout_s() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrency() -> usize {
    4
}
fn default_retry_base_ms() -> u64 {
    500
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            max_concurrency: default_max_concurrency(),
            structured_output: false,
            retry_base_ms: default_retry_base_ms(),
        }
    }

    fn endpoint(&self) -> Result<Url, GatewayError> {
        if self.base_url.trim().is_empty() {
            return Err(GatewayError::Config("base_url is empty".into()));
        }
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        Url::parse(&url).map_err(|e| GatewayError::Config(format!("invalid base_url {:?}: {e}", self.base_url)))
    }

    fn api_key(&self) -> Result<String, GatewayError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(key),
            _ => Err(GatewayError::Config(format!(
                "environment variable {:?} is not set",
                self.api_key_env
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptItem {
    pub sample_id: String,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub sample_id: String,
    /// Message content exactly as returned; empty when `error` is set.
    pub raw_output: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: std::path::PathBuf,
        line: usize,
        reason: String,
    },
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(String),
}

struct Request<'a> {
    client: &'a Client,
    url: &'a Url,
    key: &'a str,
    config: &'a EndpointConfig,
    schema: Option<&'a Value>,
}

impl Request<'_> {
    fn body(&self, item: &PromptItem) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": item.system},
                {"role": "user", "content": item.user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        if let Some(schema) = self.schema {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": SCHEMA_NAME, "strict": true, "schema": schema},
            });
        }
        body
    }

    async fn attempt(&self, body: &Value) -> Attempt {
        let response = match self.client.post(self.url.clone()).bearer_auth(self.key).json(body).send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = response.status();
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("http {}", status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Fail(format!("http {}: {}", status.as_u16(), truncate(&text)));
        }
        let parsed: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fail(format!("unparsable response body: {e}")),
        };
        match parsed["choices"][0]["message"]["content"].as_str() {
            Some(content) => Attempt::Done(content.to_string()),
            None => Attempt::Fail("response has no choices[0].message.content".into()),
        }
    }

    async fn run(&self, item: &PromptItem) -> RawPrediction {
        let body = self.body(item);
        let started = Instant::now();
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(&body).await {
                Attempt::Done(content) => break Ok(content),
                Attempt::Fail(e) => break Err(e),
                Attempt::Retry(e) if attempts > self.config.max_retries => break Err(e),
                Attempt::Retry(_) => tokio::time::sleep(backoff(self.config.retry_base_ms, attempts)).await,
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let (raw_output, error) = match outcome {
            Ok(content) => (content, None),
            Err(e) => (String::new(), Some(e)),
        };
        RawPrediction { sample_id: item.sample_id.clone(), raw_output, latency_ms, attempt_count: attempts, error }
    }
}

fn backoff(base_ms: u64, attempt: u32) -> Duration {
    let exp = base_ms.saturating_mul(1 << (attempt - 1).min(16));
    let jitter = if base_ms == 0 { 0 } else { rand::rng().random_range(0..base_ms) };
    Duration::from_millis(exp.saturating_add(jitter))
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Sends every prompt and returns one prediction per prompt, in input order.
///
/// `schema` is attached as a structured-output response format only when
/// `config.structured_output` is set. `on_result` sees each prediction as it
/// completes, in completion order.
pub async fn run_batch(
    prompts: &[PromptItem],
    config: &EndpointConfig,
    schema: Option<&Value>,
    mut on_result: impl FnMut(&RawPrediction),
) -> Result<Vec<RawPrediction>, GatewayError> {
    let url = config.endpoint()?;
    let key = config.api_key()?;
    if config.max_concurrency == 0 {
        return Err(GatewayError::Config("max_concurrency must be at least 1".into()));
    }
    let schema = match (config.structured_output, schema) {
        (true, None) => return Err(GatewayError::Config("structured_output set but no schema given".into())),
        (true, s) => s,
        (false, _) => None,
    };
    if prompts.is_empty() {
        return Ok(Vec::new());
    }
    let client = Client::builder()
        .timeout(Duration::from_secs(config.timeout_s))
        .build()
        .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
    let request = Request { client: &client, url: &url, key: &key, config, schema };

    let mut slots: Vec<Option<RawPrediction>> = vec![None; prompts.len()];
    let mut results = stream::iter(prompts.iter().enumerate())
        .map(|(i, item)| {
            let request = &request;
            async move { (i, request.run(item).await) }
        })
        .buffer_unordered(config.max_concurrency);
    while let Some((i, prediction)) = results.next().await {
        on_result(&prediction);
        slots[i] = Some(prediction);
    }
    Ok(slots.into_iter().map(|p| p.expect("every prompt completes")).collect())
}
