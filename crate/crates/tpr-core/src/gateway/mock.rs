//! Fixture-driven mock backend for deterministic offline runs.
//!
//! Fixtures are JSONL records:
//!
//! ```json
//! {"key_kind": "hash",    "key": "<sha256>",    "kind": "chat",       "value": "assistant text"}
//! {"key_kind": "pattern", "key": "<substring>", "kind": "probs",      "value": [["Yes", 0.9], ["No", 0.05]]}
//! {"key_kind": "pattern", "key": "<substring>", "kind": "embed_text", "value": [0.6, 0.8]}
//! {"key_kind": "pattern", "key": "<substring>", "kind": "embed_image","value": [[1.0, 0.0], [0.0, 1.0]]}
//! ```
//!
//! Hash keys match the canonical request hash exactly; pattern keys match as
//! substrings of the request's match text, first hit in file order wins.
//! The backend is instrumented (call counts, peak concurrency, injectable
//! transport failures and latency) so tests can assert gateway behavior.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde::Deserialize;

use super::canonical::{GatewayRequest, GatewayValue, OpKind};
use super::Backend;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct FixtureLine {
    key_kind: String,
    key: String,
    kind: String,
    value: serde_json::Value,
}

pub struct MockBackend {
    by_hash: HashMap<String, (OpKind, GatewayValue)>,
    patterns: Vec<(String, OpKind, GatewayValue)>,
    delay: Option<Duration>,
    fail_transport: AtomicU32,
    calls: AtomicU64,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read fixture file {}: {e}", path.display()))
        })?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut by_hash = HashMap::new();
        let mut patterns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine = serde_json::from_str(line).map_err(|e| {
                Error::InvalidConfig(format!("fixture line {}: {e}", lineno + 1))
            })?;
            let kind = OpKind::parse(&parsed.kind).ok_or_else(|| {
                Error::InvalidConfig(format!("fixture line {}: unknown kind {}", lineno + 1, parsed.kind))
            })?;
            let value = decode_value(kind, parsed.value).map_err(|e| {
                Error::InvalidConfig(format!("fixture line {}: {e}", lineno + 1))
            })?;
            match parsed.key_kind.as_str() {
                "hash" => {
                    by_hash.insert(parsed.key, (kind, value));
                }
                "pattern" => patterns.push((parsed.key, kind, value)),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "fixture line {}: unknown key_kind {other}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(MockBackend {
            by_hash,
            patterns,
            delay: None,
            fail_transport: AtomicU32::new(0),
            calls: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn empty() -> Self {
        Self::from_jsonl("").expect("empty fixture set")
    }

    /// Sleep this long inside every call; lets tests observe concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    /// Fail the next `n` calls with a retryable transport error.
    pub fn inject_transport_failures(&self, n: u32) {
        self.fail_transport.store(n, Ordering::SeqCst);
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_concurrency(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn lookup(&self, req: &GatewayRequest, hash: &str) -> Result<GatewayValue> {
        let kind = req.op_kind();
        if let Some((stored_kind, value)) = self.by_hash.get(hash) {
            if *stored_kind == kind {
                return Ok(value.clone());
            }
        }
        let text = req.match_text();
        for (key, stored_kind, value) in &self.patterns {
            if *stored_kind == kind && text.contains(key.as_str()) {
                return Ok(value.clone());
            }
        }
        Err(Error::FixtureMiss {
            kind: kind.as_str().to_string(),
            hash: hash.to_string(),
        })
    }
}

fn decode_value(kind: OpKind, raw: serde_json::Value) -> Result<GatewayValue> {
    let value = match kind {
        OpKind::Chat => GatewayValue::Text(serde_json::from_value(raw)?),
        OpKind::Probs => GatewayValue::TopTokens(serde_json::from_value(raw)?),
        OpKind::EmbedText => GatewayValue::Vector(serde_json::from_value(raw)?),
        OpKind::EmbedImage => GatewayValue::TokenVectors(serde_json::from_value(raw)?),
    };
    Ok(value)
}

impl Backend for MockBackend {
    fn invoke(&self, req: &GatewayRequest, canonical_hash: &str) -> Result<GatewayValue> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let result = (|| {
            if let Some(delay) = self.delay {
                std::thread::sleep(delay);
            }
            let remaining = self.fail_transport.load(Ordering::SeqCst);
            if remaining > 0
                && self
                    .fail_transport
                    .compare_exchange(remaining, remaining - 1, Ordering::SeqCst, Ordering::SeqCst)
                    .is_ok()
            {
                return Err(Error::BackendUnreachable {
                    details: "injected transport failure".into(),
                });
            }
            self.lookup(req, canonical_hash)
        })();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::canonical::BackendIdentity;
    use crate::gateway::{ChatExchange, ChatMessage, Speaker};

    fn ident() -> BackendIdentity {
        BackendIdentity {
            kind: "mock".into(),
            endpoint: "f".into(),
            model: "m".into(),
        }
    }

    fn chat_req(text: &str, seed: &str) -> GatewayRequest {
        GatewayRequest::Chat(ChatExchange {
            messages: vec![ChatMessage {
                speaker: Speaker::User,
                text: text.into(),
                image: None,
            }],
            temperature: 0.0,
            max_tokens: 16,
            seed_tag: seed.into(),
        })
    }

    #[test]
    fn pattern_lookup_first_match_wins() {
        let mock = MockBackend::from_jsonl(concat!(
            r#"{"key_kind":"pattern","key":"specific question","kind":"chat","value":"specific"}"#,
            "\n",
            r#"{"key_kind":"pattern","key":"question","kind":"chat","value":"generic"}"#,
        ))
        .unwrap();
        let req = chat_req("a specific question here", "t/x");
        let hash = req.canonical_hash(&ident());
        assert_eq!(
            mock.invoke(&req, &hash).unwrap(),
            GatewayValue::Text("specific".into())
        );
        let req2 = chat_req("another question", "t/x");
        let hash2 = req2.canonical_hash(&ident());
        assert_eq!(
            mock.invoke(&req2, &hash2).unwrap(),
            GatewayValue::Text("generic".into())
        );
    }

    #[test]
    fn hash_lookup_beats_patterns() {
        let req = chat_req("hello", "t/x");
        let hash = req.canonical_hash(&ident());
        let fixtures = format!(
            "{}\n{}",
            serde_json::json!({"key_kind":"hash","key":hash,"kind":"chat","value":"exact"}),
            r#"{"key_kind":"pattern","key":"hello","kind":"chat","value":"fuzzy"}"#,
        );
        let mock = MockBackend::from_jsonl(&fixtures).unwrap();
        assert_eq!(
            mock.invoke(&req, &hash).unwrap(),
            GatewayValue::Text("exact".into())
        );
    }

    #[test]
    fn miss_is_an_error() {
        let mock = MockBackend::empty();
        let req = chat_req("hello", "t/x");
        let hash = req.canonical_hash(&ident());
        assert!(matches!(
            mock.invoke(&req, &hash),
            Err(Error::FixtureMiss { .. })
        ));
    }

    #[test]
    fn kind_must_match() {
        let mock = MockBackend::from_jsonl(
            r#"{"key_kind":"pattern","key":"hello","kind":"embed_text","value":[1.0]}"#,
        )
        .unwrap();
        let req = chat_req("hello", "t/x");
        let hash = req.canonical_hash(&ident());
        assert!(mock.invoke(&req, &hash).is_err());
    }

    #[test]
    fn bad_fixture_line_rejected() {
        assert!(MockBackend::from_jsonl(r#"{"key_kind":"hash","key":"k","kind":"chat","value":[1]}"#).is_err());
        assert!(MockBackend::from_jsonl(r#"{"key_kind":"wat","key":"k","kind":"chat","value":"v"}"#).is_err());
        assert!(MockBackend::from_jsonl(r#"{"key_kind":"hash","key":"k","kind":"wat","value":"v"}"#).is_err());
    }
}
