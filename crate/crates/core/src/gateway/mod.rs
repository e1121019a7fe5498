//! The single boundary for text generation and embedding calls.
//!
//! Every request is identified by a SHA-256 digest over a canonical JSON
//! serialization, which is what the fixture backend keys on. The gateway
//! never rewrites prompts.

mod fixture;
#[cfg(feature = "http")]
mod http;

use std::sync::Arc;

use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixture::{FixtureBackend, FixtureEntry, RecordingBackend, ScriptedBackend};
#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig, RetryPolicy};

pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("no fixture for {kind} request {digest}")]
    FixtureMiss { kind: &'static str, digest: String },
    #[error("fixture store: {0}")]
    Fixture(String),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("embedding lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
}

impl GatewayError {
    /// Only transport failures are worth retrying.
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub session_id: u8,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            session_id: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn session(mut self, id: u8) -> Self {
        self.session_id = id;
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    fn check(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::Precondition(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::Protocol("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::Protocol("non-finite embedding component".into()));
        }
        Ok(Self {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A text-generation and embedding provider. Implementations must tolerate
/// concurrent calls.
pub trait Backend: Send + Sync {
    fn generate(&self, model: &str, req: &GenerationRequest) -> Result<String, GatewayError>;
    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError>;
}

/// Digest of a generation request: SHA-256 over the canonical JSON of
/// `(model, prompt, session_id, temperature)`.
pub fn generation_digest(model: &str, req: &GenerationRequest) -> String {
    let canonical = json!({
        "kind": "generate",
        "model": model,
        "prompt": req.prompt,
        "session_id": req.session_id,
        "temperature": req.temperature,
    });
    sha256_hex(&canonical.to_string())
}

pub fn embedding_digest(model: &str, text: &str) -> String {
    let canonical = json!({
        "kind": "embed",
        "model": model,
        "text": text,
    });
    sha256_hex(&canonical.to_string())
}

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Model-bound handle shared by the analysis stages.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    llm_model: String,
    embed_model: String,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("llm_model", &self.llm_model)
            .field("embed_model", &self.embed_model)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, llm_model: impl Into<String>, embed_model: impl Into<String>) -> Self {
        Self {
            backend,
            llm_model: llm_model.into(),
            embed_model: embed_model.into(),
        }
    }

    pub fn llm_model(&self) -> &str {
        &self.llm_model
    }

    pub fn embed_model(&self) -> &str {
        &self.embed_model
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        req.check()?;
        self.backend.generate(&self.llm_model, req)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Precondition("cannot embed empty text".into()));
        }
        let values = self.backend.embed(&self.embed_model, text)?;
        EmbeddingVector::new(values, self.embed_model.clone())
    }
}

/// Cosine of the angle between two embeddings, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, GatewayError> {
    cosine(a.values(), b.values())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, GatewayError> {
    if a.len() != b.len() {
        return Err(GatewayError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(GatewayError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec(), "m").unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 2.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(GatewayError::LengthMismatch(1, 2))
        );
        assert_eq!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])),
            Err(GatewayError::ZeroVector)
        );
    }

    #[test]
    fn digest_depends_on_every_field() {
        let base = GenerationRequest::new("p");
        let d = generation_digest("m", &base);
        assert_eq!(d.len(), 64);
        assert_eq!(d, generation_digest("m", &base.clone()));
        assert_ne!(d, generation_digest("m2", &base));
        assert_ne!(d, generation_digest("m", &base.clone().session(1)));
        assert_ne!(d, generation_digest("m", &base.clone().temperature(0.5)));
        assert_ne!(d, generation_digest("m", &GenerationRequest::new("q")));
        assert_ne!(embedding_digest("m", "p"), generation_digest("m", &base));
    }

    #[test]
    fn rejects_out_of_range_temperature() {
        let gw = Gateway::new(Arc::new(FixtureBackend::in_memory()), "m", "e");
        let err = gw.generate(&GenerationRequest::new("x").temperature(2.5));
        assert!(matches!(err, Err(GatewayError::Precondition(_))));
    }

    #[test]
    fn embedding_vector_invariants() {
        assert!(EmbeddingVector::new(vec![], "m").is_err());
        assert!(EmbeddingVector::new(vec![1.0, f64::INFINITY], "m").is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(
            a in proptest::collection::vec(-1e3f64..1e3, 1..16),
            seed in proptest::collection::vec(-1e3f64..1e3, 16),
        ) {
            let b: Vec<f64> = seed[..a.len()].to_vec();
            if let (Ok(x), Ok(y)) = (cosine(&a, &b), cosine(&b, &a)) {
                prop_assert_eq!(x, y);
                prop_assert!(x.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
