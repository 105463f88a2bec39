//! Canonical request forms: hashing for cache/fixture keys and the match
//! text that substring patterns are tested against.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{ChatExchange, Speaker};

/// What a request is, independent of backend wiring.
#[derive(Clone, Debug, PartialEq)]
pub enum GatewayRequest {
    Chat(ChatExchange),
    Probs { image: String, question: String },
    EmbedText { text: String },
    EmbedImage { image: String },
}

/// Fixture/record kind tag. String forms match the fixture file schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Chat,
    Probs,
    EmbedText,
    EmbedImage,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Chat => "chat",
            OpKind::Probs => "probs",
            OpKind::EmbedText => "embed_text",
            OpKind::EmbedImage => "embed_image",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chat" => Some(OpKind::Chat),
            "probs" => Some(OpKind::Probs),
            "embed_text" => Some(OpKind::EmbedText),
            "embed_image" => Some(OpKind::EmbedImage),
            _ => None,
        }
    }
}

/// The part of a backend that identifies cached responses: two backends with
/// the same identity are interchangeable for caching purposes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackendIdentity {
    pub kind: String,
    pub endpoint: String,
    pub model: String,
}

/// Responses in their wire-independent form, also the on-disk cache payload.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayValue {
    Text(String),
    TopTokens(Vec<(String, f64)>),
    Vector(Vec<f64>),
    TokenVectors(Vec<Vec<f64>>),
}

impl GatewayRequest {
    pub fn op_kind(&self) -> OpKind {
        match self {
            GatewayRequest::Chat(_) => OpKind::Chat,
            GatewayRequest::Probs { .. } => OpKind::Probs,
            GatewayRequest::EmbedText { .. } => OpKind::EmbedText,
            GatewayRequest::EmbedImage { .. } => OpKind::EmbedImage,
        }
    }

    /// Canonical JSON of `(backend identity, request)`. Keys are inserted in a
    /// fixed order and every field of the request participates, so equal
    /// hashes imply equal requests against the same backend.
    pub fn canonical_value(&self, ident: &BackendIdentity) -> Value {
        let body = match self {
            GatewayRequest::Chat(ex) => {
                let msgs: Vec<Value> = ex
                    .messages
                    .iter()
                    .map(|m| {
                        json!({
                            "speaker": match m.speaker { Speaker::System => "system", Speaker::User => "user" },
                            "text": m.text,
                            "image": m.image,
                        })
                    })
                    .collect();
                json!({
                    "messages": msgs,
                    "temperature": ex.temperature,
                    "max_tokens": ex.max_tokens,
                    "seed_tag": ex.seed_tag,
                })
            }
            GatewayRequest::Probs { image, question } => {
                json!({ "image": image, "question": question })
            }
            GatewayRequest::EmbedText { text } => json!({ "text": text }),
            GatewayRequest::EmbedImage { image } => json!({ "image": image }),
        };
        json!({
            "backend": { "kind": ident.kind, "endpoint": ident.endpoint, "model": ident.model },
            "op": self.op_kind().as_str(),
            "body": body,
        })
    }

    /// SHA-256 hex of the canonical form; the cache key and the fixture hash key.
    pub fn canonical_hash(&self, ident: &BackendIdentity) -> String {
        let bytes =
            serde_json::to_vec(&self.canonical_value(ident)).expect("canonical form serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }

    /// Text that fixture patterns are matched against. Layout puts the seed
    /// tag and image adjacent so one contiguous substring can pin a
    /// `(purpose, task)` pair:
    ///
    /// ```text
    /// @seed={tag} @img={image or -}
    /// {primary text}
    /// ```
    pub fn match_text(&self) -> String {
        match self {
            GatewayRequest::Chat(ex) => {
                let joined: Vec<&str> = ex.messages.iter().map(|m| m.text.as_str()).collect();
                format!(
                    "@seed={} @img={}\n{}",
                    ex.seed_tag,
                    ex.image().unwrap_or("-"),
                    joined.join("\n")
                )
            }
            GatewayRequest::Probs { image, question } => {
                format!("@seed=probs @img={image}\n{question}")
            }
            GatewayRequest::EmbedText { text } => format!("@seed=embed @img=-\n{text}"),
            GatewayRequest::EmbedImage { image } => {
                format!("@seed=embed_image @img={image}\n{image}")
            }
        }
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// SHA-256 hex of arbitrary bytes (shared by config digests and cache paths).
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}
