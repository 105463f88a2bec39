//! OpenAI-compatible HTTP backend.
//!
//! Speaks `POST {base_url}/chat/completions` (with `logprobs` +
//! `top_logprobs=20` for yes/no scoring) and `POST {base_url}/embeddings`.
//! A bearer token is read from `TPR_API_TOKEN` when present. For image
//! embeddings the serving side is expected to return one `data[]` entry per
//! vision token, in token order.

use std::time::Duration;

use serde_json::{json, Value};

use super::canonical::{GatewayRequest, GatewayValue};
use super::{Backend, Speaker};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token for authenticated endpoints.
pub const API_TOKEN_ENV: &str = "TPR_API_TOKEN";

/// How many token alternatives we request for yes/no probability extraction.
pub const TOP_LOGPROBS: u32 = 20;

pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    token: Option<String>,
}

impl OpenAiBackend {
    pub fn new(base_url: &str, model: &str, timeout_secs: f64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_secs))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        Ok(OpenAiBackend {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            token: std::env::var(API_TOKEN_ENV).ok(),
        })
    }

    fn post(&self, path: &str, body: &Value, has_image: bool) -> Result<Value> {
        let url = format!("{}{}", self.base_url, path);
        let mut builder = self.client.post(&url).json(body);
        if let Some(token) = &self.token {
            builder = builder.header("Authorization", format!("Bearer {token}"));
        }
        let response = builder.send().map_err(|e| Error::BackendUnreachable {
            details: format!("{url}: {e}"),
        })?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Error::BackendUnreachable {
                details: format!("{url}: HTTP {status}"),
            });
        }
        if !status.is_success() {
            // 4xx is permanent; a 400 on an image-bearing request is the usual
            // signature of a text-only model rejecting vision input
            if status.as_u16() == 400 && has_image {
                return Err(Error::ImageUnsupported);
            }
            return Err(Error::MalformedResponse(format!("{url}: HTTP {status}")));
        }
        response
            .json::<Value>()
            .map_err(|e| Error::MalformedResponse(format!("{url}: invalid JSON body: {e}")))
    }

    fn chat_body(&self, req: &GatewayRequest) -> (Value, bool) {
        match req {
            GatewayRequest::Chat(ex) => {
                let mut has_image = false;
                let messages: Vec<Value> = ex
                    .messages
                    .iter()
                    .map(|m| {
                        let role = match m.speaker {
                            Speaker::System => "system",
                            Speaker::User => "user",
                        };
                        let content = match &m.image {
                            None => json!(m.text),
                            Some(image) => {
                                has_image = true;
                                json!([
                                    { "type": "text", "text": m.text },
                                    { "type": "image_url", "image_url": { "url": image } },
                                ])
                            }
                        };
                        json!({ "role": role, "content": content })
                    })
                    .collect();
                (
                    json!({
                        "model": self.model,
                        "messages": messages,
                        "temperature": ex.temperature,
                        "max_tokens": ex.max_tokens,
                    }),
                    has_image,
                )
            }
            GatewayRequest::Probs { image, question } => (
                json!({
                    "model": self.model,
                    "messages": [{
                        "role": "user",
                        "content": [
                            { "type": "text", "text": question },
                            { "type": "image_url", "image_url": { "url": image } },
                        ],
                    }],
                    "temperature": 0.0,
                    "max_tokens": 1,
                    "logprobs": true,
                    "top_logprobs": TOP_LOGPROBS,
                }),
                true,
            ),
            _ => unreachable!("chat_body only serves chat/probs requests"),
        }
    }
}

impl Backend for OpenAiBackend {
    fn invoke(&self, req: &GatewayRequest, _canonical_hash: &str) -> Result<GatewayValue> {
        match req {
            GatewayRequest::Chat(_) => {
                let (body, has_image) = self.chat_body(req);
                let reply = self.post("/chat/completions", &body, has_image)?;
                let content = reply
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        Error::MalformedResponse("missing choices[0].message.content".into())
                    })?;
                Ok(GatewayValue::Text(content.to_string()))
            }
            GatewayRequest::Probs { .. } => {
                let (body, has_image) = self.chat_body(req);
                let reply = self.post("/chat/completions", &body, has_image)?;
                let top = reply
                    .pointer("/choices/0/logprobs/content/0/top_logprobs")
                    .and_then(Value::as_array)
                    .ok_or(Error::LogprobsUnavailable)?;
                let mut tokens = Vec::with_capacity(top.len());
                for entry in top {
                    let token = entry
                        .get("token")
                        .and_then(Value::as_str)
                        .ok_or_else(|| Error::MalformedResponse("top_logprobs entry missing token".into()))?;
                    let logprob = entry
                        .get("logprob")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| Error::MalformedResponse("top_logprobs entry missing logprob".into()))?;
                    tokens.push((token.to_string(), logprob.exp()));
                }
                Ok(GatewayValue::TopTokens(tokens))
            }
            GatewayRequest::EmbedText { text } => {
                let body = json!({ "model": self.model, "input": text });
                let reply = self.post("/embeddings", &body, false)?;
                let embedding = reply
                    .pointer("/data/0/embedding")
                    .ok_or_else(|| Error::MalformedResponse("missing data[0].embedding".into()))?;
                let values: Vec<f64> = serde_json::from_value(embedding.clone())
                    .map_err(|e| Error::MalformedResponse(format!("embedding not numeric: {e}")))?;
                Ok(GatewayValue::Vector(values))
            }
            GatewayRequest::EmbedImage { image } => {
                let body = json!({ "model": self.model, "input": image });
                let reply = self.post("/embeddings", &body, true)?;
                let data = reply
                    .get("data")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::MalformedResponse("missing data array".into()))?;
                let mut vectors = Vec::with_capacity(data.len());
                for entry in data {
                    let embedding = entry
                        .get("embedding")
                        .ok_or_else(|| Error::MalformedResponse("data entry missing embedding".into()))?;
                    let values: Vec<f64> = serde_json::from_value(embedding.clone())
                        .map_err(|e| Error::MalformedResponse(format!("embedding not numeric: {e}")))?;
                    vectors.push(values);
                }
                Ok(GatewayValue::TokenVectors(vectors))
            }
        }
    }
}
