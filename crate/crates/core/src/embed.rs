//! Deterministic text embedders.
//!
//! Two providers ship with the crate: [`HashEmbedder`], which maps any text
//! to a pseudo-random unit vector, and [`FixtureEmbedder`], which knows the
//! five 2-D embeddings of the running-shoes example.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fixture::{DEMO_QUERY_EMBEDDING, DEMO_QUESTION, SHOES};
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("no fixture embedding for {key:?}; known keys: {}", known.join(", "))]
    UnknownFixtureKey { key: String, known: Vec<String> },
}

/// Maps text to a vector of fixed dimension. Implementations must be pure:
/// the same text always yields the same vector, across processes.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vector, EmbedError>;
}

/// Seeded hash embedding of `text` as a unit vector of length `dim`.
///
/// SHA-256 over `(seed, text)` seeds a ChaCha8 stream; coordinates are drawn
/// uniformly from [-1, 1) and L2-normalized. Both `rand` and `rand_chacha`
/// are pinned to exact versions in the manifest so the stream never changes.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<Vector, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::ZeroDim);
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut rng_seed = [0u8; 32];
    rng_seed.copy_from_slice(digest.as_slice());
    let mut rng = ChaCha8Rng::from_seed(rng_seed);

    loop {
        let mut values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        // A zero draw is astronomically unlikely but would not normalize.
        if norm > f64::MIN_POSITIVE {
            values.iter_mut().for_each(|v| *v /= norm);
            return Ok(Vector::new(values).expect("normalized values are finite"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(Self { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        hash_embed(text, self.dim, self.seed)
    }
}

/// Looks up the 2-D embedding of one of the example's five texts: the four
/// product names (or catalog ids) and the shopper's question.
pub fn fixture_embed(text: &str) -> Result<Vector, EmbedError> {
    let values = if text == DEMO_QUESTION {
        Some(DEMO_QUERY_EMBEDDING)
    } else {
        SHOES
            .iter()
            .find(|s| s.name == text || s.id == text || s.description == text)
            .map(|s| s.embedding)
    };
    match values {
        Some(v) => Ok(Vector::new(v.to_vec()).expect("fixture values are finite")),
        None => Err(EmbedError::UnknownFixtureKey {
            key: text.to_owned(),
            known: fixture_keys().into_iter().map(str::to_owned).collect(),
        }),
    }
}

/// The texts [`fixture_embed`] accepts by name.
pub fn fixture_keys() -> Vec<&'static str> {
    SHOES
        .iter()
        .map(|s| s.name)
        .chain(std::iter::once(DEMO_QUESTION))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixtureEmbedder;

impl EmbeddingProvider for FixtureEmbedder {
    fn dim(&self) -> usize {
        2
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        fixture_embed(text)
    }
}
