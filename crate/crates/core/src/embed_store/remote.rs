//! Embeddings over HTTP: `POST {model, input: [...]}`, answered either in the
//! OpenAI shape (`data[].embedding`, optionally with `index`) or as a plain
//! `embeddings` array of float arrays.

use async_trait::async_trait;
use serde::Serialize;
use serde_json::Value;

use super::{EmbedError, EmbeddingProvider};
use crate::http::{HttpError, JsonClient};

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

impl RemoteEmbedder {
    pub fn new(client: JsonClient, model: impl Into<String>, dim: usize) -> Self {
        Self {
            client,
            model: model.into(),
            dim,
        }
    }
}

#[async_trait]
impl EmbeddingProvider for RemoteEmbedder {
    fn fingerprint(&self) -> String {
        format!("remote:{}/dim={}/v1", self.model, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let request = EmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let response = self.client.post(&request).await.map_err(|e| match e {
            HttpError::Rejected { .. } | HttpError::OfflineMode(_) | HttpError::InvalidUrl(_) => {
                EmbedError::ProviderRejected(e.to_string())
            }
            HttpError::Decode { .. } => EmbedError::MalformedResponse(e.to_string()),
            HttpError::Unreachable { .. } => EmbedError::ProviderUnreachable(e.to_string()),
        })?;
        parse_embeddings(&response)
    }
}

pub(crate) fn parse_embeddings(value: &Value) -> Result<Vec<Vec<f64>>, EmbedError> {
    let malformed = |m: &str| EmbedError::MalformedResponse(m.to_string());
    if let Some(data) = value.get("data").and_then(Value::as_array) {
        let mut rows = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let embedding = item
                .get("embedding")
                .ok_or_else(|| malformed("data item without `embedding`"))?;
            rows.push((index, float_array(embedding)?));
        }
        rows.sort_by_key(|(i, _)| *i);
        if rows
            .iter()
            .enumerate()
            .any(|(expected, (i, _))| expected != *i)
        {
            return Err(malformed(
                "`data` indices are not a permutation of the inputs",
            ));
        }
        return Ok(rows.into_iter().map(|(_, v)| v).collect());
    }
    let list = value
        .get("embeddings")
        .or(Some(value).filter(|v| v.is_array()))
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("expected `data` or `embeddings`"))?;
    list.iter().map(float_array).collect()
}

fn float_array(value: &Value) -> Result<Vec<f64>, EmbedError> {
    value
        .as_array()
        .ok_or_else(|| EmbedError::MalformedResponse("embedding is not an array".into()))?
        .iter()
        .map(|x| {
            x.as_f64().ok_or_else(|| {
                EmbedError::MalformedResponse("embedding contains a non-number".into())
            })
        })
        .collect()
}
