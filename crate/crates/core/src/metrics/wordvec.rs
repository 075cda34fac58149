use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::provider::cosine;

#[derive(Debug, thiserror::Error)]
pub enum WordVectorError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    InconsistentDimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse {token:?} as a finite number")]
    Parse { line: usize, token: String },
    #[error("word-vector file contains no vectors")]
    Empty,
}

/// What to do when a string is not a stored token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissPolicy {
    /// Fall back to the mean of per-token vectors when every token resolves.
    #[default]
    AverageTokens,
    ExactOnly,
}

/// Pretrained word vectors, read once and then shared read-only.
#[derive(Debug, Clone)]
pub struct WordVectorStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Tokens seen again after their first occurrence (first one wins).
    pub duplicates: usize,
    pub miss_policy: MissPolicy,
    /// `<file name>#sha256:<prefix>` of the source file, if loaded from disk.
    pub source_id: Option<String>,
}

impl WordVectorStore {
    /// Build from in-memory pairs. Every vector must have the same length.
    pub fn from_pairs<I: IntoIterator<Item = (String, Vec<f64>)>>(pairs: I) -> Result<Self, WordVectorError> {
        let mut store = WordVectorStore {
            dim: 0,
            vectors: HashMap::new(),
            duplicates: 0,
            miss_policy: MissPolicy::default(),
            source_id: None,
        };
        for (i, (token, v)) in pairs.into_iter().enumerate() {
            store.insert(i + 1, token, v)?;
        }
        if store.vectors.is_empty() {
            return Err(WordVectorError::Empty);
        }
        Ok(store)
    }

    fn insert(&mut self, line: usize, token: String, v: Vec<f64>) -> Result<(), WordVectorError> {
        if self.dim == 0 {
            self.dim = v.len();
        }
        if v.len() != self.dim || v.is_empty() {
            return Err(WordVectorError::InconsistentDimension {
                line,
                expected: self.dim,
                found: v.len(),
            });
        }
        match self.vectors.entry(token) {
            Entry::Occupied(_) => self.duplicates += 1,
            Entry::Vacant(e) => {
                e.insert(v);
            }
        }
        Ok(())
    }

    /// Parse the text format: optional `<count> <dim>` header, then
    /// `<token> <v1> ... <vdim>` per line.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, WordVectorError> {
        let mut store = WordVectorStore {
            dim: 0,
            vectors: HashMap::new(),
            duplicates: 0,
            miss_policy: MissPolicy::default(),
            source_id: None,
        };
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| WordVectorError::Io {
                path: PathBuf::new(),
                source,
            })?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if std::mem::take(&mut first) && rest.len() == 1 {
                if let (Ok(_), Ok(dim)) = (token.parse::<u64>(), rest[0].parse::<usize>()) {
                    store.dim = dim;
                    continue;
                }
            }
            let mut values = Vec::with_capacity(rest.len());
            for t in rest {
                match t.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(WordVectorError::Parse {
                            line: line_no,
                            token: t.to_string(),
                        })
                    }
                }
            }
            store.insert(line_no, token.to_string(), values)?;
        }
        if store.vectors.is_empty() {
            return Err(WordVectorError::Empty);
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Resolve a string to a vector: exact token, lowercase, spaces as
    /// underscores, then (under [`MissPolicy::AverageTokens`]) the mean of
    /// the per-token vectors when every token resolves.
    pub fn lookup(&self, s: &str) -> Option<Vec<f64>> {
        let lower = s.to_lowercase();
        let candidates = [
            s.to_string(),
            lower.clone(),
            s.trim().replace(' ', "_"),
            lower.trim().replace(' ', "_"),
        ];
        if let Some(v) = candidates.iter().find_map(|c| self.get(c)) {
            return Some(v.to_vec());
        }
        if self.miss_policy == MissPolicy::ExactOnly {
            return None;
        }
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() < 2 {
            return None;
        }
        let mut mean = vec![0.0; self.dim];
        for p in &parts {
            let v = self.get(p).or_else(|| self.get(&p.to_lowercase()))?;
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        let n = parts.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(mean)
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorStore, WordVectorError> {
    let io_err = |source| WordVectorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = std::fs::read(path).map_err(io_err)?;
    let mut store = WordVectorStore::parse(bytes.as_slice())?;
    let digest: String = Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    store.source_id = Some(format!("{name}#sha256:{digest}"));
    Ok(store)
}

/// Cosine similarity of the two strings' vectors; `None` (missing) when
/// either fails to resolve or resolves to a zero vector.
pub fn semantic_similarity(store: &WordVectorStore, a: &str, b: &str) -> Option<f64> {
    let va = store.lookup(a)?;
    let vb = store.lookup(b)?;
    cosine(&va, &vb)
}
