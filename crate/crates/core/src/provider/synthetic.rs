use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingProvider, ImagePayload, Modality, ProviderError, ProviderInfo};
use crate::normalize_label;
use crate::text::tokens;

/// Generator identity recorded in report headers. The per-label stream is a
/// ChaCha20 generator keyed by SHA-256 over (domain tag, seed, label),
/// sampled through `rand_distr`'s ziggurat standard normal.
pub const SYNTHETIC_PRNG_ID: &str = "chacha20[sha256(pwi-synthetic-v1|seed_le|label)]+rand_distr-0.5-StandardNormal";

pub const DEFAULT_SYNTHETIC_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProviderConfig {
    pub vocabulary: Vec<String>,
    pub seed: u64,
    /// Weight of the superimposed word in the image embedding, in [0, 1].
    pub gamma: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Answer encoded-image payloads with a vector keyed by the bytes'
    /// SHA-256 instead of rejecting them. Only used when serving the
    /// synthetic provider over the wire protocol.
    #[serde(skip)]
    pub hash_encoded_images: bool,
}

fn default_dim() -> usize {
    DEFAULT_SYNTHETIC_DIM
}

impl SyntheticProviderConfig {
    pub fn new(vocabulary: Vec<String>, seed: u64, gamma: f64) -> Self {
        SyntheticProviderConfig {
            vocabulary,
            seed,
            gamma,
            dim: DEFAULT_SYNTHETIC_DIM,
            hash_encoded_images: false,
        }
    }
}

/// Deterministic unit vector for `label` under `seed`.
pub fn synthetic_vector(seed: u64, label: &str, dim: usize) -> Embedding {
    let mut h = Sha256::new();
    h.update(b"pwi-synthetic-v1");
    h.update(seed.to_le_bytes());
    h.update(normalize_label(label).as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);
    let values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    Embedding(values).normalized()
}

pub struct SyntheticProvider {
    config: SyntheticProviderConfig,
    info: ProviderInfo,
    /// normalized label → (token sequence, unit vector), in vocabulary order
    vocab: Vec<(String, Vec<String>, Embedding)>,
    index: HashMap<String, usize>,
}

impl SyntheticProvider {
    pub fn new(config: SyntheticProviderConfig) -> Result<Self, ProviderError> {
        if config.vocabulary.is_empty() {
            return Err(ProviderError::InvalidConfig("vocabulary is empty".into()));
        }
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(ProviderError::InvalidConfig(format!(
                "gamma must be in [0, 1], got {}",
                config.gamma
            )));
        }
        if config.dim < 2 {
            return Err(ProviderError::InvalidConfig("dim must be at least 2".into()));
        }
        let mut vocab = Vec::with_capacity(config.vocabulary.len());
        let mut index = HashMap::new();
        for label in &config.vocabulary {
            let norm = normalize_label(label);
            let toks = tokens(&norm);
            if toks.is_empty() {
                return Err(ProviderError::InvalidConfig(format!("vocabulary entry {label:?} has no tokens")));
            }
            if index.insert(norm.clone(), vocab.len()).is_some() {
                return Err(ProviderError::InvalidConfig(format!("duplicate vocabulary entry {norm:?}")));
            }
            let v = synthetic_vector(config.seed, &norm, config.dim);
            vocab.push((norm, toks, v));
        }
        let info = ProviderInfo {
            name: "synthetic".into(),
            dim: config.dim,
            modalities: BTreeSet::from([Modality::Image, Modality::Text]),
        };
        Ok(SyntheticProvider {
            config,
            info,
            vocab,
            index,
        })
    }

    pub fn config(&self) -> &SyntheticProviderConfig {
        &self.config
    }

    /// Unit vector of a vocabulary label.
    pub fn label_vector(&self, label: &str) -> Result<&Embedding, ProviderError> {
        let norm = normalize_label(label);
        self.index
            .get(&norm)
            .map(|&i| &self.vocab[i].2)
            .ok_or(ProviderError::OutOfVocabulary(norm))
    }

    /// Normalized sum of the vectors of every vocabulary entry whose token
    /// sequence occurs in `text`. Each entry counts once.
    pub fn text_embedding(&self, text: &str) -> Result<Embedding, ProviderError> {
        let toks = tokens(text);
        let mut sum = vec![0.0; self.config.dim];
        let mut hits = 0usize;
        let mut last = None;
        for (i, (_, seq, v)) in self.vocab.iter().enumerate() {
            if toks.windows(seq.len()).any(|w| w == seq.as_slice()) {
                sum.iter_mut().zip(v.values()).for_each(|(s, x)| *s += x);
                hits += 1;
                last = Some(i);
            }
        }
        match (hits, last) {
            (0, _) => Err(ProviderError::NoVocabularyWord(text.to_string())),
            // a single hit returns the stored unit vector bit-for-bit
            (1, Some(i)) => Ok(self.vocab[i].2.clone()),
            _ => Ok(Embedding(sum).normalized()),
        }
    }

    /// `normalize((1-γ)·v_content + γ·v_word)`, or `v_content` without a word.
    pub fn image_embedding(&self, content: &str, word: Option<&str>) -> Result<Embedding, ProviderError> {
        let vc = self.label_vector(content)?;
        let Some(word) = word else {
            return Ok(vc.clone());
        };
        let vw = self.label_vector(word)?;
        let g = self.config.gamma;
        if g == 0.0 || vc == vw {
            return Ok(vc.clone());
        }
        if g == 1.0 {
            return Ok(vw.clone());
        }
        let mixed = vc
            .values()
            .iter()
            .zip(vw.values())
            .map(|(c, w)| (1.0 - g) * c + g * w)
            .collect();
        Ok(Embedding(mixed).normalized())
    }

    fn hashed_image(&self, bytes: &[u8]) -> Embedding {
        let digest = Sha256::digest(bytes);
        let key: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        synthetic_vector(self.config.seed, &format!("png:{key}"), self.config.dim)
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn info(&self) -> &ProviderInfo {
        &self.info
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (label, _, _) in &self.vocab {
            h.update(label.as_bytes());
            h.update([0]);
        }
        let vocab: String = h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!(
            "synthetic;dim={};seed={};gamma={:?};vocab={vocab};prng={SYNTHETIC_PRNG_ID}",
            self.config.dim, self.config.seed, self.config.gamma
        )
    }

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::EmptyBatch);
        }
        texts.iter().map(|t| self.text_embedding(t)).collect()
    }

    fn embed_images(&mut self, payloads: &[ImagePayload]) -> Result<Vec<Embedding>, ProviderError> {
        if payloads.is_empty() {
            return Err(ProviderError::EmptyBatch);
        }
        payloads
            .iter()
            .enumerate()
            .map(|(index, p)| match p {
                ImagePayload::Meta { content, word } => self.image_embedding(content, word.as_deref()),
                ImagePayload::Encoded(bytes) if self.config.hash_encoded_images => Ok(self.hashed_image(bytes)),
                ImagePayload::Encoded(_) => Err(ProviderError::UnsupportedPayload { index }),
            })
            .collect()
    }
}
