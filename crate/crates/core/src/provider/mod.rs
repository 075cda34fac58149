//! Embedding providers.
//!
//! Everything downstream consumes embeddings through [`EmbeddingProvider`].
//! Two implementations ship here: [`SyntheticProvider`], a deterministic
//! stand-in whose image embeddings mix a content vector with a word vector,
//! and [`ExternalProvider`], a client for encoder processes speaking the
//! JSON-lines protocol in [`protocol`].

mod cache;
mod external;
pub mod protocol;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use cache::EmbeddingCache;
pub use external::{ExternalProvider, DEFAULT_BATCH_SIZE};
pub use synthetic::{synthetic_vector, SyntheticProvider, SyntheticProviderConfig, DEFAULT_SYNTHETIC_DIM, SYNTHETIC_PRNG_ID};

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("provider did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("provider i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("provider error on batch {batch}: {message}")]
    Remote { batch: usize, message: String },
    #[error("payload {index} is not supported by this provider")]
    UnsupportedPayload { index: usize },
    #[error("label {0:?} is not in the synthetic vocabulary")]
    OutOfVocabulary(String),
    #[error("text {0:?} contains no vocabulary word")]
    NoVocabularyWord(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("embedding {index} has length {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("embedding {index} has non-finite components")]
    NonFinite { index: usize },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub dim: usize,
    pub modalities: BTreeSet<Modality>,
}

/// A real-valued embedding. Not necessarily unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Fails if any component is NaN or infinite.
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Embedding(values))
        } else {
            Err(ProviderError::NonFinite { index: 0 })
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// `None` when either vector has zero norm or dimensions differ.
    pub fn cosine(&self, other: &Embedding) -> Option<f64> {
        cosine(&self.0, &other.0)
    }

    pub(crate) fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (sa, sb) = (dot(a, a), dot(b, b));
    if sa == 0.0 || sb == 0.0 {
        return None;
    }
    Some(cosine_parts(dot(a, b), sa, sb))
}

/// `dot / sqrt(|a|²·|b|²)`. Taking one square root of the product keeps
/// the cosine of a vector with itself at exactly 1.
pub(crate) fn cosine_parts(dot: f64, sq_a: f64, sq_b: f64) -> f64 {
    dot / (sq_a * sq_b).sqrt()
}

/// What an image request carries: encoded pixels for real encoders, or
/// stimulus metadata for the synthetic provider.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ImagePayload {
    Encoded(Vec<u8>),
    Meta { content: String, word: Option<String> },
}

impl fmt::Display for ImagePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImagePayload::Encoded(b) => write!(f, "<{} encoded bytes>", b.len()),
            ImagePayload::Meta { content, word: Some(w) } => write!(f, "{content}+{w}"),
            ImagePayload::Meta { content, word: None } => write!(f, "{content}"),
        }
    }
}

pub trait EmbeddingProvider: Send {
    /// Handshake result; fixed for the provider's lifetime.
    fn info(&self) -> &ProviderInfo;

    /// Identity used to key persistent caches. Must change whenever the
    /// provider would return different embeddings for the same input.
    fn fingerprint(&self) -> String;

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>, ProviderError>;

    fn embed_images(&mut self, payloads: &[ImagePayload]) -> Result<Vec<Embedding>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn info(&self) -> &ProviderInfo {
        (**self).info()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>, ProviderError> {
        (**self).embed_texts(texts)
    }

    fn embed_images(&mut self, payloads: &[ImagePayload]) -> Result<Vec<Embedding>, ProviderError> {
        (**self).embed_images(payloads)
    }
}

/// Check a response batch against the handshake dimension.
pub(crate) fn check_batch(embs: &[Vec<f64>], expected_len: usize, dim: usize) -> Result<(), ProviderError> {
    if embs.len() != expected_len {
        return Err(ProviderError::ProtocolViolation(format!(
            "expected {expected_len} embeddings, got {}",
            embs.len()
        )));
    }
    for (index, e) in embs.iter().enumerate() {
        if e.len() != dim {
            return Err(ProviderError::DimensionMismatch {
                index,
                expected: dim,
                got: e.len(),
            });
        }
        if !e.iter().all(|v| v.is_finite()) {
            return Err(ProviderError::NonFinite { index });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine(&[2.0, 0.0], &[1.0, 0.0]), Some(1.0));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn embedding_rejects_nan() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(Embedding::new(vec![3.0, 4.0]).unwrap().norm(), 5.0);
    }

    #[test]
    fn batch_check() {
        assert!(check_batch(&[vec![1.0, 2.0]], 1, 2).is_ok());
        assert!(matches!(
            check_batch(&[vec![1.0]], 1, 2),
            Err(ProviderError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            check_batch(&[], 1, 2),
            Err(ProviderError::ProtocolViolation(_))
        ));
    }
}
