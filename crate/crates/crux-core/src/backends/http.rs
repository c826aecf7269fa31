//! HTTP backends: an OpenAI-compatible chat-completions client for answer
//! generation and a minimal JSON endpoint for NLI entailment.
//!
//! Both retry transient failures (transport errors, 429, 5xx) with
//! exponential backoff and respect a shared in-flight limiter.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::backends::{
    check_nli_args, check_sample_args, EntailmentBackend, GenerationBackend, InflightLimiter,
    NliResult, RetryPolicy,
};
use crate::error::{CruxError, Result};
use crate::types::DecodingParams;

/// Env var naming the generation endpoint base URL.
pub const GEN_BASE_URL_ENV: &str = "GEN_BASE_URL";
/// Env var holding the generation bearer token.
pub const GEN_API_KEY_ENV: &str = "GEN_API_KEY";
/// Env var naming the NLI endpoint URL.
pub const NLI_BASE_URL_ENV: &str = "NLI_BASE_URL";

fn is_retryable_status(status: reqwest::StatusCode) -> bool {
    status.as_u16() == 429 || status.is_server_error()
}

/// Runs `attempt` under the retry policy. Transport errors and retryable
/// statuses are retried; anything else is returned as-is.
fn with_retries<T>(
    policy: &RetryPolicy,
    mut attempt: impl FnMut() -> std::result::Result<T, RetryableError>,
) -> Result<T> {
    let mut backoff = policy.initial_backoff;
    let mut last: Option<String> = None;
    for i in 0..=policy.retries {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(RetryableError::Transient(msg)) => {
                last = Some(msg);
                if i < policy.retries {
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
            }
            Err(RetryableError::Fatal(e)) => return Err(e),
        }
    }
    Err(CruxError::BackendUnavailable(format!(
        "retry budget exhausted after {} attempts: {}",
        policy.retries + 1,
        last.unwrap_or_else(|| "unknown failure".into())
    )))
}

enum RetryableError {
    Transient(String),
    Fatal(CruxError),
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// OpenAI-compatible generation backend (`POST {base}/v1/chat/completions`).
///
/// Requests the protocol's `n` parameter; if the server returns fewer
/// choices, the remainder is collected through sequential single calls.
pub struct HttpGenerationBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
    limiter: Arc<InflightLimiter>,
}

impl HttpGenerationBackend {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> Self {
        Self::with_policy(base_url, api_key, model, RetryPolicy::default(), Arc::new(InflightLimiter::new(4)))
    }

    pub fn with_policy(
        base_url: &str,
        api_key: Option<String>,
        model: &str,
        retry: RetryPolicy,
        limiter: Arc<InflightLimiter>,
    ) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            retry,
            limiter,
        }
    }

    fn completions_call(
        &self,
        prompt: &str,
        n: usize,
        params: &DecodingParams,
    ) -> Result<Vec<String>> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "n": n,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }

        with_retries(&self.retry, || {
            let _guard = self.limiter.acquire();
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .map_err(|e| RetryableError::Transient(format!("{url}: {e}")))?;
            let status = resp.status();
            if is_retryable_status(status) {
                return Err(RetryableError::Transient(format!("{url}: HTTP {status}")));
            }
            if !status.is_success() {
                return Err(RetryableError::Fatal(CruxError::BackendUnavailable(
                    format!("{url}: HTTP {status}"),
                )));
            }
            let parsed: ChatCompletionResponse = resp.json().map_err(|e| {
                RetryableError::Fatal(CruxError::MalformedResponse(format!("{url}: {e}")))
            })?;
            parsed
                .choices
                .into_iter()
                .map(|c| {
                    c.message.content.map(|t| t.trim().to_string()).ok_or_else(|| {
                        RetryableError::Fatal(CruxError::MalformedResponse(
                            "choice missing message.content".into(),
                        ))
                    })
                })
                .collect()
        })
    }
}

impl GenerationBackend for HttpGenerationBackend {
    fn sample_answers(&self, prompt: &str, n: usize, params: &DecodingParams) -> Result<Vec<String>> {
        check_sample_args(prompt, n)?;
        params.validate()?;

        let mut answers = self.completions_call(prompt, n, params)?;
        if answers.is_empty() {
            return Err(CruxError::MalformedResponse("response contained no choices".into()));
        }
        // Servers that ignore `n` return one choice per call.
        while answers.len() < n {
            let extra = self.completions_call(prompt, 1, params)?;
            if extra.is_empty() {
                return Err(CruxError::MalformedResponse("response contained no choices".into()));
            }
            answers.extend(extra);
        }
        answers.truncate(n);
        Ok(answers)
    }

    fn identity(&self) -> String {
        format!("openai:{}:{}", self.base_url, self.model)
    }
}

#[derive(Deserialize)]
struct NliResponse {
    entailment: Option<f64>,
    neutral: Option<f64>,
    contradiction: Option<f64>,
}

/// NLI backend: `POST <url>` with `{"premise", "hypothesis"}`, expecting
/// `{"entailment", "neutral", "contradiction"}`.
pub struct HttpNliBackend {
    client: reqwest::blocking::Client,
    url: String,
    retry: RetryPolicy,
    limiter: Arc<InflightLimiter>,
}

impl HttpNliBackend {
    pub fn new(url: &str) -> Self {
        Self::with_policy(url, RetryPolicy::default(), Arc::new(InflightLimiter::new(4)))
    }

    pub fn with_policy(url: &str, retry: RetryPolicy, limiter: Arc<InflightLimiter>) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("reqwest client"),
            url: url.trim_end_matches('/').to_string(),
            retry,
            limiter,
        }
    }
}

impl EntailmentBackend for HttpNliBackend {
    fn entailment_probs(&self, premise: &str, hypothesis: &str) -> Result<NliResult> {
        check_nli_args(premise, hypothesis)?;
        let body = json!({"premise": premise, "hypothesis": hypothesis});

        let parsed: NliResponse = with_retries(&self.retry, || {
            let _guard = self.limiter.acquire();
            let resp = self
                .client
                .post(&self.url)
                .json(&body)
                .send()
                .map_err(|e| RetryableError::Transient(format!("{}: {e}", self.url)))?;
            let status = resp.status();
            if is_retryable_status(status) {
                return Err(RetryableError::Transient(format!("{}: HTTP {status}", self.url)));
            }
            if !status.is_success() {
                return Err(RetryableError::Fatal(CruxError::BackendUnavailable(
                    format!("{}: HTTP {status}", self.url),
                )));
            }
            resp.json().map_err(|e| {
                RetryableError::Fatal(CruxError::MalformedResponse(format!("{}: {e}", self.url)))
            })
        })?;

        match (parsed.entailment, parsed.neutral, parsed.contradiction) {
            (Some(e), Some(n), Some(c)) => NliResult::new(e, n, c),
            _ => Err(CruxError::MalformedResponse(
                "NLI response missing entailment/neutral/contradiction".into(),
            )),
        }
    }

    fn identity(&self) -> String {
        format!("nli:{}", self.url)
    }
}
