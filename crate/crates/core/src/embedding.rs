//! Sentence embeddings for input-similarity retrieval and difficulty scoring.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no embedding for \"{0}\"")]
    Missing(String),
    #[error("embeddings line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("embedding dimension {got} differs from {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding service: {0}")]
    Service(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Produces unit-norm vectors of a fixed dimension. `id` names the instance
/// the text belongs to; providers backed by precomputed vectors look it up.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, id: &str, text: &str) -> Result<Vec<f32>, EmbedError>;
}

/// Scales `v` to unit length; a zero vector stays zero.
pub fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    }
    v
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Precomputed vectors, one `id<TAB>v1,v2,...,vd` line each.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddings {
    vectors: HashMap<String, Vec<f32>>,
    dimension: usize,
}

impl FileEmbeddings {
    pub fn parse(text: &str) -> Result<Self, EmbedError> {
        let mut out = FileEmbeddings::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| EmbedError::Malformed { line: i + 1, message };
            let (id, values) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>vector".into()))?;
            let v: Vec<f32> = values
                .split(',')
                .map(|x| x.trim().parse::<f32>().map_err(|_| bad(format!("invalid number \"{x}\""))))
                .collect::<Result<_, _>>()?;
            if out.dimension == 0 {
                out.dimension = v.len();
            } else if v.len() != out.dimension {
                return Err(bad(format!("dimension {} differs from {}", v.len(), out.dimension)));
            }
            out.vectors.insert(id.to_string(), normalize(v));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, id: &str, _text: &str) -> Result<Vec<f32>, EmbedError> {
        self.vectors.get(id).cloned().ok_or_else(|| EmbedError::Missing(id.to_string()))
    }
}

/// Feature hashing over lowercased words and character trigrams. Needs no
/// model, so it stands in when no sentence encoder is configured.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dimension: 256 }
    }
}

impl HashingEmbedder {
    fn add(&self, v: &mut [f32], feature: &str) {
        let digest = Sha256::digest(feature.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        v[(h % self.dimension as u64) as usize] += sign;
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, _id: &str, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v = vec![0.0f32; self.dimension];
        let lower = text.to_lowercase();
        for w in lower.split_whitespace() {
            self.add(&mut v, &format!("w:{w}"));
            let chars: Vec<char> = format!(" {w} ").chars().collect();
            for g in chars.windows(3) {
                self.add(&mut v, &format!("c:{}", g.iter().collect::<String>()));
            }
        }
        Ok(normalize(v))
    }
}

/// Service answering `POST {"text": ...}` with `{"vector": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddings {
    pub url: String,
    pub dimension: usize,
    pub timeout: Duration,
}

impl EmbeddingProvider for HttpEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, _id: &str, text: &str) -> Result<Vec<f32>, EmbedError> {
        #[derive(serde::Deserialize)]
        struct Reply {
            vector: Vec<f32>,
        }
        let reply: Reply = ureq::post(&self.url)
            .timeout(self.timeout)
            .send_json(serde_json::json!({ "text": text }))
            .map_err(|e| EmbedError::Service(e.to_string()))?
            .into_json()
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        if reply.vector.len() != self.dimension {
            return Err(EmbedError::Dimension { expected: self.dimension, got: reply.vector.len() });
        }
        Ok(normalize(reply.vector))
    }
}
