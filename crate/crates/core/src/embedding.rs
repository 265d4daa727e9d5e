//! Task-description embedding providers.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TaskSpec;

/// Task id → description embedding.
pub type EmbeddingTable = BTreeMap<String, Vec<f64>>;

pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    fn embed_task(&self, task: &TaskSpec) -> Result<Vec<f64>> {
        self.embed(&task.description)
    }
}

/// Signed feature hashing of lower-cased alphanumeric tokens, unit-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedding {
    dimension: usize,
}

impl HashedEmbedding {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("embedding.dimension", "must be at least 1"));
        }
        Ok(Self { dimension })
    }
}

impl Default for HashedEmbedding {
    fn default() -> Self {
        Self { dimension: 64 }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dimension];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let idx = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Precomputed vectors keyed by task id (or by literal text for `embed`).
#[derive(Debug, Clone)]
pub struct FileEmbedding {
    vectors: EmbeddingTable,
    dimension: usize,
}

impl FileEmbedding {
    pub fn from_table(vectors: EmbeddingTable) -> Result<Self> {
        let dimension = vectors.values().next().map_or(0, Vec::len);
        if dimension == 0 {
            return Err(Error::Embedding("embedding file holds no vectors".into()));
        }
        for (id, v) in &vectors {
            if v.len() != dimension {
                return Err(Error::Embedding(format!(
                    "vector for {id} has length {} (expected {dimension})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Embedding(format!("vector for {id} has non-finite entries")));
            }
        }
        Ok(Self { vectors, dimension })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(serde_json::from_str(&text)?)
    }
}

impl EmbeddingProvider for FileEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| Error::Embedding(format!("no vector for `{text}`")))
    }

    fn embed_task(&self, task: &TaskSpec) -> Result<Vec<f64>> {
        self.vectors
            .get(&task.id)
            .cloned()
            .ok_or_else(|| Error::Embedding(format!("no vector for task `{}`", task.id)))
    }
}

/// Embeds every task, keyed by id.
pub fn embed_tasks<'a>(
    provider: &dyn EmbeddingProvider,
    tasks: impl IntoIterator<Item = &'a TaskSpec>,
) -> Result<EmbeddingTable> {
    tasks
        .into_iter()
        .map(|t| Ok((t.id.clone(), provider.embed_task(t)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::cosine;

    #[test]
    fn hashed_is_deterministic_and_unit() {
        let p = HashedEmbedding::new(32).unwrap();
        let a = p.embed("CYP3A4 substrate classification").unwrap();
        let b = p.embed("cyp3a4 SUBSTRATE classification").unwrap();
        assert_eq!(a, b);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let p = HashedEmbedding::default();
        let a = p.embed("absorption caco2 permeability regression").unwrap();
        let b = p.embed("absorption caco2 permeability regression assay").unwrap();
        let c = p.embed("toxicity herg blockade").unwrap();
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn empty_text_gives_zero_vector() {
        let v = HashedEmbedding::new(8).unwrap().embed("").unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn file_provider_rejects_ragged_vectors() {
        let mut t = EmbeddingTable::new();
        t.insert("a".into(), vec![1.0, 0.0]);
        t.insert("b".into(), vec![1.0]);
        assert!(FileEmbedding::from_table(t).is_err());
    }
}
