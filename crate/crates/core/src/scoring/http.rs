//! Blocking client for a remote scoring service.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;

use super::wire::{ScoreBatchRequest, ScoreBatchResponse, SCORE_PATH};
use super::{ScoreError, ScoreRequest, Scorer};

/// Environment variable holding the default scoring endpoint.
pub const SCORER_URL_ENV: &str = "QEFUSE_SCORER_URL";

const MAX_BACKOFF: Duration = Duration::from_secs(2);

#[derive(Debug, Clone)]
pub struct HttpScorerConfig {
    /// Base URL; requests go to `<endpoint>/score`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Largest number of pairs per HTTP request.
    pub max_batch: usize,
    /// Extra attempts after a failed one.
    pub retries: u32,
    /// First retry delay, doubled on every further retry.
    pub backoff: Duration,
    pub bearer_token: Option<String>,
}

impl HttpScorerConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(60),
            max_batch: 400,
            retries: 3,
            backoff: Duration::from_millis(100),
            bearer_token: None,
        }
    }

    /// Endpoint from [`SCORER_URL_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(SCORER_URL_ENV).ok().map(Self::new)
    }

    pub fn max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch;
        self
    }

    pub fn retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn bearer_token(mut self, token: impl Into<String>) -> Self {
        self.bearer_token = Some(token.into());
        self
    }
}

/// A [`Scorer`] backed by the HTTP scoring protocol.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: Client,
    url: String,
    config: HttpScorerConfig,
}

impl HttpScorer {
    pub fn new(config: HttpScorerConfig) -> Result<Self, ScoreError> {
        if config.max_batch == 0 {
            return Err(ScoreError::Other("max_batch must be at least 1".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ScoreError::Other(format!("cannot build HTTP client: {e}")))?;
        let url = format!("{}{}", config.endpoint.trim_end_matches('/'), SCORE_PATH);
        Ok(Self { client, url, config })
    }

    pub fn config(&self) -> &HttpScorerConfig {
        &self.config
    }

    fn post_chunk(&self, chunk_idx: usize, first_item: usize, pairs: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        let body = ScoreBatchRequest { pairs: pairs.to_vec() };
        let mut delay = self.config.backoff;
        let mut last_err = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay = (delay * 2).min(MAX_BACKOFF);
            }
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(token) = &self.config.bearer_token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(resp) => resp,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                last_err = format!("server answered {status}");
                continue;
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(ScoreError::Protocol {
                    chunk: chunk_idx,
                    first_item,
                    message: format!("server answered {status}: {text}"),
                });
            }
            let text = match resp.text() {
                Ok(text) => text,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let parsed: ScoreBatchResponse = serde_json::from_str(&text).map_err(|e| ScoreError::Protocol {
                chunk: chunk_idx,
                first_item,
                message: format!("malformed response: {e}"),
            })?;
            if parsed.scores.len() != pairs.len() {
                return Err(ScoreError::Protocol {
                    chunk: chunk_idx,
                    first_item,
                    message: format!("expected {} scores, got {}", pairs.len(), parsed.scores.len()),
                });
            }
            return Ok(parsed.scores);
        }
        Err(ScoreError::Transport {
            chunk: chunk_idx,
            first_item,
            message: last_err,
        })
    }
}

impl Scorer for HttpScorer {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        let mut scores = Vec::with_capacity(requests.len());
        for (idx, chunk) in requests.chunks(self.config.max_batch).enumerate() {
            scores.extend(self.post_chunk(idx, idx * self.config.max_batch, chunk)?);
        }
        Ok(scores)
    }
}

/// One-shot convenience around [`HttpScorer`].
pub fn http_score_batch(
    endpoint: &str,
    requests: &[ScoreRequest],
    timeout: Duration,
    max_batch: usize,
    retries: u32,
) -> Result<Vec<f64>, ScoreError> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let config = HttpScorerConfig::new(endpoint)
        .timeout(timeout)
        .max_batch(max_batch)
        .retries(retries);
    HttpScorer::new(config)?.score_batch(requests)
}
