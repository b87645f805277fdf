//! Sentence embeddings behind the [`Embedder`] trait.
//!
//! [`HashEmbedder`] is a weight-free reference implementation: signed feature
//! hashing of lowercase character 3-, 4- and 5-grams. [`RemoteEmbedder`] calls
//! an external encoding service.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::http::{HttpClient, HttpConfig, HttpError};

pub const DEFAULT_DIMENSION: usize = 512;

/// Unit-norm `f32` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding has non-finite or all-zero entries")]
    Degenerate,
    #[error("embedding service returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Http(#[from] HttpError),
}

impl EmbeddingVector {
    /// Normalize raw values to unit length. Fails on non-finite or zero input.
    pub fn normalized(raw: Vec<f32>) -> Result<Self, EmbedError> {
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Degenerate);
        }
        let norm = raw.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::Degenerate);
        }
        Ok(Self(raw.into_iter().map(|x| (f64::from(x) / norm) as f32).collect()))
    }

    /// Basis vector `e_index` of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        Self(v)
    }

    /// Wrap values that are already unit length (e.g. loaded from disk).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;
    fn neg(self) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|x| -x).collect())
    }
}

/// Dot product of unit vectors, accumulated in `f64` and clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Identifies which embedder produced a set of vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub name: String,
    pub dimension: usize,
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn dimension(&self) -> usize;

    fn fingerprint(&self) -> Fingerprint;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        crate::par::map(texts, |t| self.embed(t)).into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    /// Feature-hashed character n-gram embedding. Each n-gram's FNV-1a hash
    /// picks bucket `h % d` and sign `+1` if bit 63 is clear, else `-1`.
    /// Text with no 3-gram falls back to `e_0`.
    pub fn hash_embed(&self, text: &str) -> EmbeddingVector {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut acc = vec![0f64; self.dimension];
        let mut buf = String::new();
        for n in 3..=5 {
            for w in chars.windows(n) {
                buf.clear();
                buf.extend(w);
                let h = fnv1a(buf.as_bytes());
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                acc[(h % self.dimension as u64) as usize] += sign;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return EmbeddingVector::basis(self.dimension, 0);
        }
        EmbeddingVector(acc.into_iter().map(|x| (x / norm) as f32).collect())
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.hash_embed(text))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            name: "hash-ngram-3-5-fnv1a".to_string(),
            dimension: self.dimension,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking
/// `POST {"texts": [...]}` → `{"vectors": [[...], ...]}`.
/// Returned vectors are re-normalized.
pub struct RemoteEmbedder {
    client: HttpClient,
    endpoint: String,
    name: String,
    dimension: usize,
    max_batch: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize, http: HttpConfig) -> Result<Self, EmbedError> {
        let endpoint = endpoint.into();
        Ok(Self {
            client: HttpClient::new(http)?,
            name: format!("remote:{endpoint}"),
            endpoint,
            dimension,
            max_batch: 64,
        })
    }

    pub fn with_timeout(endpoint: impl Into<String>, dimension: usize, timeout: Duration) -> Result<Self, EmbedError> {
        Self::new(
            endpoint,
            dimension,
            HttpConfig {
                timeout,
                ..HttpConfig::default()
            },
        )
    }

    fn call(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp: EmbedResponse = self.client.post_json(&self.endpoint, &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: resp.vectors.len(),
            });
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        left: self.dimension,
                        right: v.len(),
                    });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.call(std::slice::from_ref(&text.to_string()))?;
        Ok(v.remove(0))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            name: self.name.clone(),
            dimension: self.dimension,
        }
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let chunks: Vec<&[String]> = texts.chunks(self.max_batch).collect();
        let mut out = Vec::with_capacity(texts.len());
        for r in crate::par::map(&chunks, |c| self.call(c)) {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashEmbedder::default();
        let a = e.hash_embed("The quick brown fox");
        assert_eq!(a, e.hash_embed("The quick brown fox"));
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(a.dimension(), 512);
    }

    #[test]
    fn case_insensitive() {
        let e = HashEmbedder::default();
        assert_eq!(e.hash_embed("ABC def"), e.hash_embed("abc DEF"));
    }

    #[test]
    fn empty_is_first_basis() {
        let e = HashEmbedder::new(16);
        assert_eq!(e.hash_embed(""), EmbeddingVector::basis(16, 0));
        assert_eq!(e.hash_embed("ab"), EmbeddingVector::basis(16, 0));
    }

    #[test]
    fn cosine_cases() {
        let e0 = EmbeddingVector::basis(4, 0);
        let e1 = EmbeddingVector::basis(4, 1);
        assert_eq!(cosine(&e0, &e1).unwrap(), 0.0);
        assert_eq!(cosine(&e0, &e0).unwrap(), 1.0);
        let v = HashEmbedder::default().hash_embed("some words");
        assert!((cosine(&v, &-&v).unwrap() + 1.0).abs() < 1e-6);
        assert!(matches!(cosine(&e0, &EmbeddingVector::basis(5, 0)), Err(EmbedError::DimensionMismatch { .. })));
    }

    #[test]
    fn lexical_similarity_ordering() {
        let e = HashEmbedder::default();
        let q = e.hash_embed("the cat sat");
        let near = cosine(&q, &e.hash_embed("the cat sat down")).unwrap();
        let far = cosine(&q, &e.hash_embed("quarterly earnings report")).unwrap();
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn normalized_rejects_zero_and_nan() {
        assert!(EmbeddingVector::normalized(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::normalized(vec![f32::NAN, 1.0]).is_err());
        let v = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), [0.6, 0.8]);
    }
}
