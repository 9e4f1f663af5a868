//! Remote JSON completion service.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{truncate_at_stop, LanguageModel, LmError};

pub const ENDPOINT_VAR: &str = "PET_LM_ENDPOINT";
pub const TOKEN_VAR: &str = "PET_LM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    #[serde(skip_serializing)]
    pub token: Option<String>,
    /// Extra attempts after the first on 5xx or network failure.
    pub retries: u32,
    pub timeout_ms: u64,
    pub max_inflight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            token: None,
            retries: 2,
            timeout_ms: 30_000,
            max_inflight: 4,
        }
    }
}

impl HttpConfig {
    /// Overrides endpoint and token from the environment when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(e) = std::env::var(ENDPOINT_VAR) {
            self.endpoint = e;
        }
        if let Ok(t) = std::env::var(TOKEN_VAR) {
            self.token = Some(t);
        }
        self
    }
}

/// Counting gate bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Deserialize)]
struct LogprobsResponse {
    logprobs: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LmError::Network { url: config.endpoint.clone(), message: e.to_string() })?;
        let gate = Gate { free: Mutex::new(config.max_inflight.max(1)), cv: Condvar::new() };
        Ok(HttpBackend { config, client, gate })
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &Value) -> Result<T, LmError> {
        let url = format!("{}/{path}", self.config.endpoint.trim_end_matches('/'));
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                tracing::debug!(%url, attempt, "retrying");
            }
            let _slot = self.gate.enter();
            let mut req = self.client.post(&url).json(body);
            if let Some(t) = &self.config.token {
                req = req.bearer_auth(t);
            }
            match req.send() {
                Err(e) => last = Some(LmError::Network { url: url.clone(), message: e.to_string() }),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| LmError::Protocol(format!("{url}: {e}")));
                    }
                    let err = LmError::Http { status: status.as_u16(), url: url.clone(), body: text };
                    if !status.is_server_error() {
                        return Err(err);
                    }
                    last = Some(err);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn logprobs(&self, prompt: &str, candidates: &[&str]) -> Result<Vec<f64>, LmError> {
        let r: LogprobsResponse = self.post("logprobs", &json!({ "prompt": prompt, "candidates": candidates }))?;
        candidates
            .iter()
            .map(|c| {
                r.logprobs
                    .get(*c)
                    .copied()
                    .ok_or_else(|| LmError::Protocol(format!("no logprob for `{c}`")))
            })
            .collect()
    }
}

impl LanguageModel for HttpBackend {
    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[String]) -> Result<String, LmError> {
        let body = json!({ "prompt": prompt, "max_tokens": max_tokens, "stop": stop, "temperature": 0 });
        let r: GenerateResponse = self.post("generate", &body)?;
        Ok(truncate_at_stop(&r.text, stop))
    }

    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError> {
        let lp = self.logprobs(prompt, &[candidate])?[0];
        Ok(lp.exp().clamp(0.0, 1.0))
    }

    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        let lp = self.logprobs(prompt, &["Yes", "No"])?;
        let m = lp[0].max(lp[1]);
        let (y, n) = ((lp[0] - m).exp(), (lp[1] - m).exp());
        Ok((y / (y + n), n / (y + n)))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        let r: EmbedResponse = self.post("embed", &json!({ "text": text }))?;
        let norm = r.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LmError::Protocol("embedding has zero or non-finite norm".into()));
        }
        Ok(r.embedding.iter().map(|v| v / norm).collect())
    }
}
