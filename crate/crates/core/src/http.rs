//! Minimal JSON-over-HTTP client shared by the embedding, rerank and chat
//! backends.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("remote endpoints are disabled in offline mode (tried to configure {0})")]
    OfflineMode(String),
    #[error("invalid endpoint URL `{0}`")]
    InvalidUrl(String),
    #[error("{url} unreachable after {attempts} attempt(s): {reason}")]
    Unreachable {
        url: String,
        attempts: u32,
        reason: String,
    },
    #[error("{url} rejected the request with HTTP {status}: {body}")]
    Rejected {
        url: String,
        status: u16,
        body: String,
    },
    #[error("{url} returned an unparseable body: {reason}")]
    Decode { url: String, reason: String },
}

/// Whether remote endpoints may be contacted at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkMode {
    Online,
    Offline,
}

/// Retries apply to transport failures, timeouts and 5xx responses only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    url: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    client: reqwest::Client,
}

impl JsonClient {
    pub fn new(
        url: &str,
        api_key: Option<String>,
        policy: RetryPolicy,
        mode: NetworkMode,
    ) -> Result<Self, HttpError> {
        if mode == NetworkMode::Offline {
            return Err(HttpError::OfflineMode(url.to_string()));
        }
        let parsed =
            reqwest::Url::parse(url).map_err(|_| HttpError::InvalidUrl(url.to_string()))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(HttpError::InvalidUrl(url.to_string()));
        }
        let client = reqwest::Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| HttpError::InvalidUrl(format!("{url}: {e}")))?;
        Ok(Self {
            url: url.to_string(),
            api_key: api_key.filter(|k| !k.is_empty()),
            policy,
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub async fn post<B: Serialize + ?Sized>(
        &self,
        body: &B,
    ) -> Result<serde_json::Value, HttpError> {
        let attempts = self.policy.attempts.max(1);
        let mut backoff = self.policy.initial_backoff;
        let mut last_reason = String::new();
        for attempt in 1..=attempts {
            let mut request = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send().await {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let text = response.text().await.map_err(|e| HttpError::Decode {
                            url: self.url.clone(),
                            reason: e.to_string(),
                        })?;
                        return serde_json::from_str(&text).map_err(|e| HttpError::Decode {
                            url: self.url.clone(),
                            reason: e.to_string(),
                        });
                    }
                    let text = response.text().await.unwrap_or_default();
                    if status.is_client_error() {
                        return Err(HttpError::Rejected {
                            url: self.url.clone(),
                            status: status.as_u16(),
                            body: truncate(&text, 500),
                        });
                    }
                    last_reason = format!("HTTP {}: {}", status.as_u16(), truncate(&text, 200));
                }
                Err(e) => last_reason = e.to_string(),
            }
            if attempt < attempts {
                tracing::warn!(url = %self.url, attempt, reason = %last_reason, "retrying request");
                tokio::time::sleep(backoff).await;
                backoff *= 2;
            }
        }
        Err(HttpError::Unreachable {
            url: self.url.clone(),
            attempts,
            reason: last_reason,
        })
    }
}

/// Appends `suffix` to a base URL unless it already ends with it.
pub fn endpoint_url(base: &str, suffix: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(suffix) {
        base.to_string()
    } else {
        format!("{base}{suffix}")
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_mode_refuses_construction() {
        let err = JsonClient::new(
            "http://localhost:1",
            None,
            RetryPolicy::default(),
            NetworkMode::Offline,
        )
        .unwrap_err();
        assert!(matches!(err, HttpError::OfflineMode(_)));
    }

    #[test]
    fn rejects_non_http_urls() {
        assert!(
            JsonClient::new("ftp://x", None, RetryPolicy::default(), NetworkMode::Online).is_err()
        );
        assert!(JsonClient::new(
            "not a url",
            None,
            RetryPolicy::default(),
            NetworkMode::Online
        )
        .is_err());
    }

    #[test]
    fn endpoint_suffix_is_added_once() {
        assert_eq!(
            endpoint_url("http://h/v1/", "/embeddings"),
            "http://h/v1/embeddings"
        );
        assert_eq!(
            endpoint_url("http://h/v1/embeddings", "/embeddings"),
            "http://h/v1/embeddings"
        );
    }
}
