use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingProvider, ImagePayload, ProviderError};
use crate::report::write_atomic;

/// Embedding cache keyed by (provider fingerprint, content digest).
///
/// Requests are deduplicated: each distinct text or image payload is sent
/// to the provider at most once over the cache's lifetime.
#[derive(Debug)]
pub struct EmbeddingCache {
    fingerprint: String,
    entries: BTreeMap<String, Vec<f64>>,
    file: Option<PathBuf>,
    text_items_requested: usize,
    image_items_requested: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    fingerprint: String,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn in_memory(fingerprint: impl Into<String>) -> Self {
        EmbeddingCache {
            fingerprint: fingerprint.into(),
            entries: BTreeMap::new(),
            file: None,
            text_items_requested: 0,
            image_items_requested: 0,
        }
    }

    /// Cache backed by a file under `dir`, loaded if present and written by
    /// [`save`](Self::save). A file for another fingerprint is ignored.
    pub fn persistent(dir: &Path, fingerprint: impl Into<String>) -> Self {
        let fingerprint = fingerprint.into();
        let file = dir.join(format!("{}.json", &hex_digest(fingerprint.as_bytes())[..16]));
        let entries = std::fs::read(&file)
            .ok()
            .and_then(|b| serde_json::from_slice::<CacheFile>(&b).ok())
            .filter(|c| c.fingerprint == fingerprint)
            .map(|c| c.entries)
            .unwrap_or_default();
        EmbeddingCache {
            fingerprint,
            entries,
            file: Some(file),
            text_items_requested: 0,
            image_items_requested: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of text items actually sent to the provider.
    pub fn text_items_requested(&self) -> usize {
        self.text_items_requested
    }

    pub fn image_items_requested(&self) -> usize {
        self.image_items_requested
    }

    pub fn embed_texts<P: EmbeddingProvider + ?Sized>(
        &mut self,
        provider: &mut P,
        texts: &[String],
    ) -> Result<Vec<Embedding>, ProviderError> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing = self.missing(&keys);
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let embs = provider.embed_texts(&batch)?;
            self.text_items_requested += batch.len();
            self.insert(&keys, &missing, embs);
        }
        Ok(self.collect(&keys))
    }

    pub fn embed_images<P: EmbeddingProvider + ?Sized>(
        &mut self,
        provider: &mut P,
        payloads: &[ImagePayload],
    ) -> Result<Vec<Embedding>, ProviderError> {
        let keys: Vec<String> = payloads.iter().map(image_key).collect();
        let missing = self.missing(&keys);
        if !missing.is_empty() {
            let batch: Vec<ImagePayload> = missing.iter().map(|&i| payloads[i].clone()).collect();
            let embs = provider.embed_images(&batch)?;
            self.image_items_requested += batch.len();
            self.insert(&keys, &missing, embs);
        }
        Ok(self.collect(&keys))
    }

    /// Indices of the first occurrence of each key not yet cached.
    fn missing(&self, keys: &[String]) -> Vec<usize> {
        let mut first = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            if !self.entries.contains_key(k) {
                first.entry(k.as_str()).or_insert(i);
            }
        }
        let mut idx: Vec<usize> = first.into_values().collect();
        idx.sort_unstable();
        idx
    }

    fn insert(&mut self, keys: &[String], missing: &[usize], embs: Vec<Embedding>) {
        for (&i, e) in missing.iter().zip(embs) {
            self.entries.insert(keys[i].clone(), e.into_values());
        }
    }

    fn collect(&self, keys: &[String]) -> Vec<Embedding> {
        keys.iter().map(|k| Embedding(self.entries[k].clone())).collect()
    }

    pub fn save(&self) -> std::io::Result<()> {
        let Some(file) = &self.file else {
            return Ok(());
        };
        if let Some(dir) = file.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let body = CacheFile {
            fingerprint: self.fingerprint.clone(),
            entries: self.entries.clone(),
        };
        write_atomic(file, &serde_json::to_vec(&body).map_err(std::io::Error::other)?)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn text_key(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"text\0");
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn image_key(payload: &ImagePayload) -> String {
    let mut h = Sha256::new();
    match payload {
        ImagePayload::Encoded(bytes) => {
            h.update(b"png\0");
            h.update(bytes);
        }
        ImagePayload::Meta { content, word } => {
            h.update(b"meta\0");
            h.update(content.as_bytes());
            if let Some(w) = word {
                h.update(b"\0");
                h.update(w.as_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{SyntheticProvider, SyntheticProviderConfig};

    fn provider() -> SyntheticProvider {
        SyntheticProvider::new(SyntheticProviderConfig::new(vec!["dog".into(), "cat".into()], 4, 0.5)).unwrap()
    }

    #[test]
    fn dedups_within_and_across_calls() {
        let mut p = provider();
        let mut cache = EmbeddingCache::in_memory(p.fingerprint());
        let texts: Vec<String> = vec!["a dog".into(), "a cat".into(), "a dog".into()];
        let out = cache.embed_texts(&mut p, &texts).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[2]);
        assert_eq!(cache.text_items_requested(), 2);
        cache.embed_texts(&mut p, &texts).unwrap();
        assert_eq!(cache.text_items_requested(), 2);

        let imgs = vec![
            ImagePayload::Meta { content: "dog".into(), word: Some("cat".into()) },
            ImagePayload::Meta { content: "dog".into(), word: None },
            ImagePayload::Meta { content: "dog".into(), word: Some("cat".into()) },
        ];
        let out = cache.embed_images(&mut p, &imgs).unwrap();
        assert_eq!(out[0], out[2]);
        assert_ne!(out[0], out[1]);
        assert_eq!(cache.image_items_requested(), 2);
    }

    #[test]
    fn persists_per_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = provider();
        let mut cache = EmbeddingCache::persistent(dir.path(), p.fingerprint());
        let first = cache.embed_texts(&mut p, &["a dog".into()]).unwrap();
        cache.save().unwrap();

        let mut reloaded = EmbeddingCache::persistent(dir.path(), p.fingerprint());
        assert_eq!(reloaded.len(), 1);
        assert_eq!(reloaded.embed_texts(&mut p, &["a dog".into()]).unwrap(), first);
        assert_eq!(reloaded.text_items_requested(), 0);

        let other = EmbeddingCache::persistent(dir.path(), "something else");
        assert!(other.is_empty());
    }
}
